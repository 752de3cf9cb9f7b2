use crate::error::{shape, Result};

/// Fully connected layer. Flat parameters: `weights[out][in]` then `bias[out]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize) -> Self {
        Dense { in_dim, out_dim }
    }

    pub fn num_weights(&self) -> usize {
        self.in_dim * self.out_dim
    }

    pub fn num_params(&self) -> usize {
        self.num_weights() + self.out_dim
    }

    fn check(&self, params: &[f64], input: &[f64]) -> Result<()> {
        if params.len() != self.num_params() || input.len() != self.in_dim {
            return Err(shape(format!(
                "dense {}->{} got {} params and {} inputs",
                self.in_dim,
                self.out_dim,
                params.len(),
                input.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, params: &[f64], input: &[f64]) -> Result<Vec<f64>> {
        self.check(params, input)?;
        let (w, b) = params.split_at(self.num_weights());
        Ok((0..self.out_dim)
            .map(|o| {
                b[o] + w[o * self.in_dim..][..self.in_dim]
                    .iter()
                    .zip(input)
                    .map(|(a, x)| a * x)
                    .sum::<f64>()
            })
            .collect())
    }

    /// Accumulates into `grad_params`; returns the input gradient.
    pub fn backward(
        &self,
        params: &[f64],
        input: &[f64],
        grad_out: &[f64],
        grad_params: &mut [f64],
    ) -> Result<Vec<f64>> {
        self.check(params, input)?;
        if grad_out.len() != self.out_dim || grad_params.len() != params.len() {
            return Err(shape("dense backward buffers do not match layer geometry"));
        }
        let nw = self.num_weights();
        let w = &params[..nw];
        let (gw, gb) = grad_params.split_at_mut(nw);
        let mut grad_in = vec![0.0; self.in_dim];
        for (o, &g) in grad_out.iter().enumerate() {
            gb[o] += g;
            let row = o * self.in_dim;
            for i in 0..self.in_dim {
                gw[row + i] += g * input[i];
                grad_in[i] += g * w[row + i];
            }
        }
        Ok(grad_in)
    }
}

pub fn relu_forward(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.max(0.0)).collect()
}

/// Gradient through ReLU given its pre-activation input.
pub fn relu_backward(pre: &[f64], grad_out: &[f64]) -> Result<Vec<f64>> {
    if pre.len() != grad_out.len() {
        return Err(shape("relu backward length mismatch"));
    }
    Ok(pre
        .iter()
        .zip(grad_out)
        .map(|(x, g)| if *x > 0.0 { *g } else { 0.0 })
        .collect())
}
