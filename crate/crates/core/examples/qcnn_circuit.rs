//! Runs one QCNN block on a 16-sample segment and prints the readout marginals.
//!
//! `cargo run --example qcnn_circuit -- [seed]`

use hybrid_qcnn::qcnn::{conv_unitary, qcnn_forward, QcnnParams};
use hybrid_qcnn::qsim::StateVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hybrid_qcnn::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = QcnnParams::random(&mut rng, 0.1);

    let segment: Vec<f64> = (0..16).map(|t| (t as f64 * 0.4).sin() + 0.1 * t as f64).collect();
    let state = StateVector::amplitude_encode(&segment)?;
    println!("encoded norm      {:.15}", state.norm());
    println!("conv unitarity    {:.2e}", conv_unitary(&params.conv1).unitarity_error());

    let (p0, p1) = qcnn_forward(&segment, &params)?;
    println!("P(q3=0) {p0:.6}  P(q3=1) {p1:.6}  sum {:.15}", p0 + p1);

    let scaled: Vec<f64> = segment.iter().map(|v| v * 250.0).collect();
    let (s0, _) = qcnn_forward(&scaled, &params)?;
    println!("scale x250 shifts P(q3=0) by {:.1e}", (s0 - p0).abs());
    Ok(())
}
