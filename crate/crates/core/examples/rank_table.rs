//! Ranks ROIs in a summary CSV by their average normalized improvement.
//!
//! `cargo run --example rank_table -- [summary.csv] [top]`

use std::path::PathBuf;

use hybrid_qcnn::cli::rank_file;

fn main() -> hybrid_qcnn::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let path = args.first().map_or_else(
        || PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/reported_summary.csv"),
        PathBuf::from,
    );
    let top = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(9);
    for r in rank_file(&path)?.iter().take(top) {
        let [a, b, c] = r.normalized;
        println!("{:>2}  ROI {:>3}  {a:.3} {b:.3} {c:.3}  avg {:.3}", r.rank, r.roi, r.average);
    }
    Ok(())
}
