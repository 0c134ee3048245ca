use super::layers::softmax;
use crate::error::{Error, Result};

/// Weighted categorical cross-entropy on logits. Returns the loss, the
/// softmax probabilities and the logit gradient `w·(p − onehot)`.
pub fn softmax_cross_entropy(logits: &[f64], target: usize, weight: f64) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if target >= logits.len() {
        return Err(Error::invalid(format!(
            "target class {target} out of {} classes",
            logits.len()
        )));
    }
    let p = softmax(logits);
    let loss = -weight * p[target].max(f64::MIN_POSITIVE).ln();
    let mut grad: Vec<f64> = p.iter().map(|v| weight * v).collect();
    grad[target] -= weight;
    Ok((loss, p, grad))
}

/// Weighted squared error `w·(y − t)²` and its derivative in `y`.
pub fn squared_error(y: f64, target: f64, weight: f64) -> (f64, f64) {
    let d = y - target;
    (weight * d * d, 2.0 * weight * d)
}
