//! Central-difference gradient verification.

use alloc::format;

use crate::{Error, Result};

/// Compares `analytic` against central differences of `loss` around `params`
/// and returns the largest relative error
/// `|a - c| / (|a| + |c| + 1e-12)` over all coordinates.
pub fn fd_check<F>(mut loss: F, params: &[f64], analytic: &[f64], step: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    if params.len() != analytic.len() {
        return Err(Error::shape("fd_check", params.len(), analytic.len()));
    }
    if !(step > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {step}")));
    }
    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for j in 0..params.len() {
        probe[j] = params[j] + step;
        let plus = loss(&probe);
        probe[j] = params[j] - step;
        let minus = loss(&probe);
        probe[j] = params[j];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite {
                step: 0,
                term: "fd_check loss",
                block: format!("coordinate {j}"),
            });
        }
        let central = (plus - minus) / (2.0 * step);
        let a = analytic[j];
        let rel = (a - central).abs() / (a.abs() + central.abs() + 1e-12);
        worst = worst.max(rel);
    }
    Ok(worst)
}
