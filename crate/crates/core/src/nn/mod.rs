//! Classical layers with hand-derived backward passes.

mod adam;
mod conv;
mod dense;
mod loss;

pub use adam::Adam;
pub use conv::{conv1d_output_length, Conv1d};
pub use dense::{relu_backward, relu_forward, Dense};
pub use loss::{softmax, weighted_softmax_xent, LOG_CLAMP};

use rand::Rng;

use crate::error::{shape, Result};

/// Inverted dropout. Returns the output and the per-element scale that was applied
/// (`0` or `1 / (1 - rate)`); in eval mode, or with `rate == 0`, the input is returned unchanged.
pub fn dropout_forward<R: Rng + ?Sized>(
    x: &[f64],
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(shape(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok((x.to_vec(), vec![1.0; x.len()]));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = x
        .iter()
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    Ok((x.iter().zip(&mask).map(|(v, m)| v * m).collect(), mask))
}

pub fn dropout_backward(mask: &[f64], grad_out: &[f64]) -> Result<Vec<f64>> {
    if mask.len() != grad_out.len() {
        return Err(shape("dropout backward length mismatch"));
    }
    Ok(mask.iter().zip(grad_out).map(|(m, g)| m * g).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dropout_rate_zero_and_eval_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = [1.0, -2.0, 3.0];
        assert_eq!(dropout_forward(&x, 0.0, true, &mut rng).unwrap().0, x.to_vec());
        assert_eq!(dropout_forward(&x, 0.0, false, &mut rng).unwrap().0, x.to_vec());
        assert_eq!(dropout_forward(&x, 0.5, false, &mut rng).unwrap().0, x.to_vec());
    }

    #[test]
    fn dropout_training_scales_survivors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = vec![1.0; 1000];
        let (y, mask) = dropout_forward(&x, 0.5, true, &mut rng).unwrap();
        assert!(y.iter().all(|v| *v == 0.0 || *v == 2.0));
        let kept = y.iter().filter(|v| **v > 0.0).count();
        assert!((400..600).contains(&kept));
        assert_eq!(dropout_backward(&mask, &x).unwrap(), y);
        assert!(dropout_forward(&x, 1.0, true, &mut rng).is_err());
    }
}
