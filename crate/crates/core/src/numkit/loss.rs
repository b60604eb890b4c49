use crate::error::{Error, Result};

use super::Tensor2D;

/// Predictions are clamped into `[BCE_EPS, 1 - BCE_EPS]` before taking logs.
pub const BCE_EPS: f64 = 1e-7;

/// Class-weighted binary cross-entropy, averaged over all entries.
///
/// Returns the loss and its gradient with respect to `pred`. The gradient is
/// evaluated at the clamped prediction.
pub fn bce_loss(pred: &Tensor2D, target: &Tensor2D, pos_weight: f64) -> Result<(f64, Tensor2D)> {
    if !pred.same_shape(target) {
        return Err(Error::validation(format!(
            "bce_loss: dimension mismatch between {}x{} and {}x{}",
            pred.rows(),
            pred.cols(),
            target.rows(),
            target.cols()
        )));
    }
    if !(pos_weight > 0.0 && pos_weight.is_finite()) {
        return Err(Error::validation(format!(
            "bce_loss: pos_weight must be positive, got {pos_weight}"
        )));
    }
    let n = pred.data().len().max(1) as f64;
    let mut grad = Tensor2D::zeros(pred.rows(), pred.cols());
    let mut total = 0.0;
    for ((g, &p), &y) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let (l, d) = bce_term(p, y, pos_weight);
        total += l;
        *g = d / n;
    }
    Ok((total / n, grad))
}

/// Loss and d(loss)/d(pred) of one entry, unnormalised.
#[inline]
pub fn bce_term(p: f64, y: f64, pos_weight: f64) -> (f64, f64) {
    let pc = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    let loss = -(pos_weight * y * pc.ln() + (1.0 - y) * (1.0 - pc).ln());
    let grad = -(pos_weight * y / pc) + (1.0 - y) / (1.0 - pc);
    (loss, grad)
}

/// Gradient of the weighted BCE with respect to the logit `z` where `p = sigmoid(z)`.
#[inline]
pub fn bce_logit_grad(p: f64, y: f64, pos_weight: f64) -> f64 {
    let (_, dp) = bce_term(p, y, pos_weight);
    dp * p * (1.0 - p)
}
