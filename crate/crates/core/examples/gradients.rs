//! Compares the adjoint QCNN gradient with the shift rule and finite differences.
//!
//! `cargo run --example gradients -- [seed]`

use hybrid_qcnn::qcnn::{qcnn_forward, qcnn_gradient, qcnn_gradient_parameter_shift, QcnnParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> hybrid_qcnn::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = QcnnParams::random(&mut rng, 1.0);
    let x: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let upstream = [1.0, -1.0];

    let adjoint = qcnn_gradient(&x, &params, upstream)?;
    let shift = qcnn_gradient_parameter_shift(&x, &params, upstream)?;

    let angles = params.to_vec();
    let h = 1e-6;
    let mut worst_shift: f64 = 0.0;
    let mut worst_fd: f64 = 0.0;
    for k in 0..angles.len() {
        let eval = |d: f64| -> hybrid_qcnn::Result<f64> {
            let mut a = angles.clone();
            a[k] += d;
            let (p0, p1) = qcnn_forward(&x, &QcnnParams::from_slice(&a)?)?;
            Ok(upstream[0] * p0 + upstream[1] * p1)
        };
        let fd = (eval(h)? - eval(-h)?) / (2.0 * h);
        worst_shift = worst_shift.max((adjoint[k] - shift[k]).abs());
        worst_fd = worst_fd.max((adjoint[k] - fd).abs());
        if k < 6 {
            println!("theta[{k:>2}]  adjoint {:+.9}  shift {:+.9}  fd {:+.9}", adjoint[k], shift[k], fd);
        }
    }
    println!("max |adjoint - shift| {worst_shift:.1e}");
    println!("max |adjoint - fd|    {worst_fd:.1e}");
    Ok(())
}
