//! Generates a synthetic cohort, writes it as CSV and reads it back.
//!
//! `cargo run --release --example gen_data -- [out.csv] [separation]`

use std::path::PathBuf;

use hybrid_qcnn::data::{generate_synthetic, load_dataset, save_dataset, SyntheticConfig, EMCI};

fn main() -> hybrid_qcnn::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = args.first().map_or_else(|| std::env::temp_dir().join("synthetic.csv"), PathBuf::from);
    let separation = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1.0);

    let cfg = SyntheticConfig { n_healthy: 20, n_emci: 20, separation, seed: 3, ..Default::default() };
    let records = generate_synthetic(&cfg)?;
    save_dataset(&records, &out)?;
    let back = load_dataset(&out)?;

    let emci = back.iter().filter(|r| r.label == EMCI).count();
    println!("wrote {} subjects ({emci} EMCI) x 116 ROIs to {}", back.len(), out.display());
    println!("round trip exact: {}", back == records);
    println!("config:\n{}", cfg.to_toml_string()?);
    Ok(())
}
