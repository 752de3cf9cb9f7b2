//! Trains every model on one fold of a synthetic cohort and prints test balanced accuracy.
//!
//! `cargo run --release --example train_cell -- [separation] [epochs] [fold]`

use std::time::Instant;

use hybrid_qcnn::data::{generate_synthetic, roi_slice, SyntheticConfig};
use hybrid_qcnn::model::ModelKind;
use hybrid_qcnn::train::{cell_seed, sweep_folds, train_one, TrainConfig};

fn main() -> hybrid_qcnn::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let separation: f64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let fold: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);

    let amplitude: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1.5);
    let cfg = SyntheticConfig { separation, signal_amplitude: amplitude, affected_rois: vec![1], ..Default::default() };
    let records = generate_synthetic(&cfg)?;
    let samples = roi_slice(&records, 1)?;
    let folds = sweep_folds(&records, 5, 0)?;

    for kind in ModelKind::ALL {
        let start = Instant::now();
        let tc = TrainConfig { epochs, seed: cell_seed(0, 1, kind, fold), kind, ..Default::default() };
        let out = train_one(&tc, &folds[fold], &samples)?;
        println!(
            "{kind:<9} BA {:.3}  final loss {:.4}  {:.1}s",
            out.test_balanced_accuracy,
            out.loss_history.last().copied().unwrap_or(f64::NAN),
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
