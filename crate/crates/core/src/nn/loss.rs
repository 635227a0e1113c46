//! The two training losses.
//!
//! Reconstruction quality is the squared Frobenius norm of the error
//! matrix (a sum, not a per-element mean), so the score scale matches the
//! thresholds swept downstream. Classification uses binary cross-entropy
//! with predictions clipped away from {0, 1}.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

/// Clip for predictions fed into the log; keeps the loss finite.
pub const BCE_CLIP: f64 = 1e-7;

/// Squared Frobenius norm of X - Y, accumulated in double precision.
pub fn mse(x: &Tensor<f64>, y: &Tensor<f64>) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(Error::Argument(format!(
            "mse shapes differ: {:?} vs {:?}",
            x.shape(),
            y.shape()
        )));
    }
    Ok(x.data()
        .iter()
        .zip(y.data().iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// Gradient of `mse` w.r.t. Y: 2 (Y - X).
pub fn mse_grad(x: &Tensor<f64>, y: &Tensor<f64>) -> Result<Tensor<f64>> {
    if x.shape() != y.shape() {
        return Err(Error::Argument(format!(
            "mse shapes differ: {:?} vs {:?}",
            x.shape(),
            y.shape()
        )));
    }
    let data = x
        .data()
        .iter()
        .zip(y.data().iter())
        .map(|(a, b)| 2.0 * (b - a))
        .collect();
    Tensor::from_vec(x.shape(), data)
}

fn clip(p: f64) -> f64 {
    p.clamp(BCE_CLIP, 1.0 - BCE_CLIP)
}

/// Binary cross-entropy, mean over samples; predictions are clipped to
/// [1e-7, 1 - 1e-7] before the log.
pub fn bce(labels: &[f64], preds: &[f64]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Argument("bce needs at least one sample".into()));
    }
    if labels.len() != preds.len() {
        return Err(Error::Argument(format!(
            "bce got {} labels but {} predictions",
            labels.len(),
            preds.len()
        )));
    }
    let n = labels.len() as f64;
    let sum: f64 = labels
        .iter()
        .zip(preds.iter())
        .map(|(&y, &p)| {
            let p = clip(p);
            y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        })
        .sum();
    Ok(-sum / n)
}

/// Gradient of `bce` w.r.t. each prediction.
pub fn bce_grad(labels: &[f64], preds: &[f64]) -> Result<Vec<f64>> {
    if labels.is_empty() {
        return Err(Error::Argument("bce needs at least one sample".into()));
    }
    if labels.len() != preds.len() {
        return Err(Error::Argument(format!(
            "bce got {} labels but {} predictions",
            labels.len(),
            preds.len()
        )));
    }
    let n = labels.len() as f64;
    Ok(labels
        .iter()
        .zip(preds.iter())
        .map(|(&y, &p)| {
            let p = clip(p);
            -(y / p - (1.0 - y) / (1.0 - p)) / n
        })
        .collect())
}
