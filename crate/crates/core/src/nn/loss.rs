use crate::error::{shape, Error, Result};

/// Lower bound on the probability inside the log.
pub const LOG_CLAMP: f64 = 1e-12;

pub fn softmax(logits: &[f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
    let s = e[0] + e[1];
    [e[0] / s, e[1] / s]
}

/// Class-weighted softmax cross-entropy over two logits.
///
/// Returns `(-w[label] * log softmax(logits)[label], d loss / d logits)`.
pub fn weighted_softmax_xent(
    logits: &[f64; 2],
    label: usize,
    class_weights: &[f64; 2],
) -> Result<(f64, [f64; 2])> {
    if logits.iter().chain(class_weights).any(|v| v.is_nan()) {
        return Err(Error::Numerics("NaN in loss inputs".into()));
    }
    if label > 1 {
        return Err(shape(format!("label {label} is not binary")));
    }
    let other = 1 - label;
    // log softmax[label] = -ln(1 + exp(z_other - z_label))
    let log_p = -(logits[other] - logits[label]).exp().ln_1p();
    let log_p = log_p.max(LOG_CLAMP.ln());
    let w = class_weights[label];
    let p = softmax(logits);
    let mut grad = [w * p[0], w * p[1]];
    grad[label] -= w;
    Ok((-w * log_p, grad))
}
