//! Cross-validated sweep over a few ROIs and all four architectures.
//!
//! `cargo run --release --example sweep -- [epochs] [workers]`

use hybrid_qcnn::data::{generate_synthetic, SyntheticConfig};
use hybrid_qcnn::model::ModelKind;
use hybrid_qcnn::train::{rank_summary, run_sweep, summarize, SweepConfig};

fn main() -> hybrid_qcnn::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let epochs = args.first().and_then(|s| s.parse().ok()).unwrap_or(20);
    let workers = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2);

    // Only ROIs 1 and 2 carry signal; ROI 3 is noise.
    let data = SyntheticConfig { n_healthy: 60, n_emci: 60, affected_rois: vec![1, 2], ..Default::default() };
    let records = generate_synthetic(&data)?;
    let cfg = SweepConfig { epochs, workers, ..Default::default() };
    let report = run_sweep(&records, &[1, 2, 3], &ModelKind::ALL, &cfg, None)?;

    let rows = summarize(&report.experiments);
    let f = |v: Option<f64>| v.map_or_else(|| "  -  ".to_string(), |x| format!("{x:.3}"));
    println!("ROI   baseline hybrid1 hybrid2 hybrid4");
    for r in &rows {
        println!("{:>3}   {}    {}   {}   {}", r.roi, f(r.baseline), f(r.hybrid1), f(r.hybrid2), f(r.hybrid4));
    }
    for r in rank_summary(&rows)? {
        println!("{:>2}  ROI {}, {:.3}", r.rank, r.roi, r.average);
    }
    Ok(())
}
