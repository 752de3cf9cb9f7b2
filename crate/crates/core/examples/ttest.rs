//! Paired t-tests between the per-ROI accuracies of every pair of models.
//!
//! `cargo run --example ttest -- [summary.csv]`

use std::path::PathBuf;

use hybrid_qcnn::cli::ttest_file;

fn main() -> hybrid_qcnn::Result<()> {
    let path = std::env::args().nth(1).map_or_else(
        || PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/reported_summary.csv"),
        PathBuf::from,
    );
    for (a, b, t) in ttest_file(&path)? {
        println!(
            "{a:<8} vs {b:<8} t {:>8.3}  df {:.0}  p(one) {:.2e}  r {:.4}",
            t.t,
            t.df,
            t.p_one_tail,
            t.pearson.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
