use crate::error::{Error, Result};

use super::Tensor2D;

/// Compares an analytic gradient against central differences.
///
/// `f` returns the scalar value and its analytic gradient at the given point.
/// The result is `max |analytic - numeric| / max(1, |analytic|)` over all
/// coordinates of `x`.
pub fn finite_diff_gradcheck<F>(f: F, x: &Tensor2D, h: f64) -> Result<f64>
where
    F: Fn(&Tensor2D) -> Result<(f64, Tensor2D)>,
{
    let (value, analytic) = f(x)?;
    if !value.is_finite() {
        return Err(Error::numeric("gradcheck: non-finite function value"));
    }
    if !analytic.same_shape(x) {
        return Err(Error::validation(format!(
            "gradcheck: gradient shape {}x{} differs from input {}x{}",
            analytic.rows(),
            analytic.cols(),
            x.rows(),
            x.cols()
        )));
    }
    let mut probe = x.clone();
    let mut worst = 0.0f64;
    for idx in 0..x.data().len() {
        let orig = x.data()[idx];
        probe.data_mut()[idx] = orig + h;
        let (plus, _) = f(&probe)?;
        probe.data_mut()[idx] = orig - h;
        let (minus, _) = f(&probe)?;
        probe.data_mut()[idx] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::numeric(format!(
                "gradcheck: non-finite function value at coordinate {idx}"
            )));
        }
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic.data()[idx];
        let rel = (a - numeric).abs() / a.abs().max(1.0);
        worst = worst.max(rel);
    }
    Ok(worst)
}
