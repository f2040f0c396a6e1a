//! Central-difference gradient verification.

use super::array::NumArray;
use crate::error::{Error, Result};

/// Analytic vs numeric gradient comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub analytic: NumArray,
    pub numeric: NumArray,
    /// `max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-8)`.
    pub max_rel_error: f64,
}

/// Compares the analytic gradient returned by `loss` at `params` against
/// central differences with step `step`.
///
/// `loss` maps a parameter array to `(value, analytic gradient)`.
pub fn grad_check<F>(loss: F, params: &NumArray, step: f64) -> Result<GradReport>
where
    F: Fn(&NumArray) -> Result<(f64, NumArray)>,
{
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be > 0, got {step}")));
    }
    let (value, analytic) = loss(params)?;
    if !value.is_finite() {
        return Err(Error::InvalidParameter("loss is not finite at the probe point".into()));
    }
    if analytic.shape() != params.shape() {
        return Err(Error::dim("grad_check analytic gradient", params.len(), analytic.len()));
    }
    let mut probe = params.clone();
    let mut numeric = vec![0.0; params.len()];
    #[allow(clippy::needless_range_loop)]
    for i in 0..params.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let plus = loss(&probe)?.0;
        probe.data_mut()[i] = orig - step;
        let minus = loss(&probe)?.0;
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::ProbeFailure { index: i });
        }
        numeric[i] = (plus - minus) / (2.0 * step);
    }
    let max_rel_error = analytic
        .data()
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max);
    Ok(GradReport {
        numeric: NumArray::new(params.shape().to_vec(), numeric)?,
        analytic,
        max_rel_error,
    })
}
