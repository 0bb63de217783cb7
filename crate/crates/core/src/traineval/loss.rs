//! Softmax cross-entropy.

use crate::error::{Error, Result};
use crate::linalg::{log_sum_exp, softmax_slice};

fn check_label(label: usize, classes: usize) -> Result<()> {
    if label >= classes {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    Ok(())
}

/// `−ln p[label]` and the logit gradient `p − onehot(label)`.
pub fn cross_entropy(probabilities: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    check_label(label, probabilities.len())?;
    let loss = -probabilities[label].ln();
    let mut grad = probabilities.to_vec();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Same as [`cross_entropy`] but computed from logits, stable when `p[label]` underflows.
pub fn cross_entropy_logits(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    check_label(label, logits.len())?;
    let loss = log_sum_exp(logits) - logits[label];
    let mut grad = softmax_slice(logits);
    grad[label] -= 1.0;
    Ok((loss, grad))
}
