use crate::error::{shape, Result};

/// Valid (unpadded) 1D convolution geometry.
///
/// Parameters live in a flat slice: `weights[out][in][kernel]` followed by `bias[out]`.
/// Activations are channel-major: `x[c * len + t]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv1d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// `floor((len - kernel) / stride) + 1`; no padding.
pub fn conv1d_output_length(len: usize, kernel: usize, stride: usize) -> Result<usize> {
    if kernel == 0 || stride == 0 {
        return Err(shape("kernel and stride must be positive"));
    }
    if len < kernel {
        return Err(shape(format!("input length {len} shorter than kernel {kernel}")));
    }
    Ok((len - kernel) / stride + 1)
}

impl Conv1d {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        Conv1d { in_channels, out_channels, kernel, stride }
    }

    pub fn num_weights(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel
    }

    pub fn num_params(&self) -> usize {
        self.num_weights() + self.out_channels
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel
    }

    pub fn output_length(&self, len: usize) -> Result<usize> {
        conv1d_output_length(len, self.kernel, self.stride)
    }

    fn check(&self, params: &[f64], input: &[f64], len: usize) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(shape(format!(
                "conv1d expects {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        if input.len() != self.in_channels * len {
            return Err(shape(format!(
                "conv1d expects {}x{len} input, got {} values",
                self.in_channels,
                input.len()
            )));
        }
        Ok(())
    }

    /// Returns `out_channels x output_length(len)` activations.
    pub fn forward(&self, params: &[f64], input: &[f64], len: usize) -> Result<Vec<f64>> {
        self.check(params, input, len)?;
        let out_len = self.output_length(len)?;
        let (w, b) = params.split_at(self.num_weights());
        let k = self.kernel;
        let mut out = vec![0.0; self.out_channels * out_len];
        for o in 0..self.out_channels {
            for t in 0..out_len {
                let start = t * self.stride;
                let mut acc = b[o];
                for c in 0..self.in_channels {
                    let wrow = &w[(o * self.in_channels + c) * k..][..k];
                    let xrow = &input[c * len + start..][..k];
                    acc += wrow.iter().zip(xrow).map(|(a, x)| a * x).sum::<f64>();
                }
                out[o * out_len + t] = acc;
            }
        }
        Ok(out)
    }

    /// Accumulates parameter gradients into `grad_params` and returns the input gradient.
    pub fn backward(
        &self,
        params: &[f64],
        input: &[f64],
        len: usize,
        grad_out: &[f64],
        grad_params: &mut [f64],
    ) -> Result<Vec<f64>> {
        self.check(params, input, len)?;
        let out_len = self.output_length(len)?;
        if grad_out.len() != self.out_channels * out_len || grad_params.len() != params.len() {
            return Err(shape("conv1d backward buffers do not match layer geometry"));
        }
        let k = self.kernel;
        let nw = self.num_weights();
        let w = &params[..nw];
        let mut grad_in = vec![0.0; input.len()];
        let (gw, gb) = grad_params.split_at_mut(nw);
        for o in 0..self.out_channels {
            for t in 0..out_len {
                let g = grad_out[o * out_len + t];
                if g == 0.0 {
                    continue;
                }
                gb[o] += g;
                let start = t * self.stride;
                for c in 0..self.in_channels {
                    let base = (o * self.in_channels + c) * k;
                    for j in 0..k {
                        gw[base + j] += g * input[c * len + start + j];
                        grad_in[c * len + start + j] += g * w[base + j];
                    }
                }
            }
        }
        Ok(grad_in)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn output_lengths_from_layer_tables() {
        assert_eq!(conv1d_output_length(124, 30, 2).unwrap(), 48);
        assert_eq!(conv1d_output_length(140, 30, 2).unwrap(), 56);
        assert_eq!(conv1d_output_length(76, 30, 2).unwrap(), 24);
        assert_eq!(conv1d_output_length(48, 20, 2).unwrap(), 15);
        assert_eq!(conv1d_output_length(15, 10, 2).unwrap(), 3);
        assert!(conv1d_output_length(29, 30, 2).is_err());
    }

    #[test]
    fn single_tap_identity() {
        let layer = Conv1d::new(1, 1, 1, 1);
        let x = [0.5, -1.0, 2.0, 3.5];
        assert_eq!(layer.forward(&[1.0, 0.0], &x, 4).unwrap(), x.to_vec());
    }

    #[test]
    fn parameter_count_formula() {
        assert_eq!(Conv1d::new(1, 8, 30, 2).num_params(), 248);
        assert_eq!(Conv1d::new(8, 16, 20, 2).num_params(), 2576);
        assert_eq!(Conv1d::new(16, 32, 10, 2).num_params(), 5152);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let layer = Conv1d::new(2, 3, 3, 1);
        assert!(layer.forward(&vec![0.0; layer.num_params()], &[0.0; 9], 5).is_err());
        assert!(layer.forward(&[0.0; 4], &[0.0; 10], 5).is_err());
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let layer = Conv1d::new(3, 4, 5, 2);
        let len = 17;
        let params: Vec<f64> = (0..layer.num_params()).map(|_| rng.random::<f64>() - 0.5).collect();
        let x: Vec<f64> = (0..3 * len).map(|_| rng.random::<f64>() - 0.5).collect();
        let out_len = layer.output_length(len).unwrap();
        let upstream: Vec<f64> = (0..4 * out_len).map(|_| rng.random::<f64>() - 0.5).collect();
        let loss = |p: &[f64], x: &[f64]| -> f64 {
            layer.forward(p, x, len).unwrap().iter().zip(&upstream).map(|(a, b)| a * b).sum()
        };
        let mut gp = vec![0.0; params.len()];
        let gx = layer.backward(&params, &x, len, &upstream, &mut gp).unwrap();
        let h = 1e-5;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-8);
        for i in 0..params.len() {
            let (mut pp, mut pm) = (params.clone(), params.clone());
            pp[i] += h;
            pm[i] -= h;
            let fd = (loss(&pp, &x) - loss(&pm, &x)) / (2.0 * h);
            assert!(rel(gp[i], fd) <= 1e-4, "param {i}: {} vs {fd}", gp[i]);
        }
        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += h;
            xm[i] -= h;
            let fd = (loss(&params, &xp) - loss(&params, &xm)) / (2.0 * h);
            assert!(rel(gx[i], fd) <= 1e-4, "input {i}: {} vs {fd}", gx[i]);
        }
    }
}
