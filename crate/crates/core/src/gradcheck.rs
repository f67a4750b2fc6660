//! Central finite-difference gradient checking.

use crate::error::Result;
use crate::params::ParamVector;

/// Maximum over coordinates of `|analytic - numeric| / max(1, |analytic|)`
/// where `numeric` is the central difference with step `epsilon`.
///
/// `f` returns `(value, analytic_gradient)` and must be deterministic.
pub fn grad_check<F>(f: F, params: &ParamVector, epsilon: f64) -> Result<f64>
where
    F: Fn(&ParamVector) -> Result<(f64, ParamVector)>,
{
    assert!(epsilon > 0.0, "epsilon must be positive");
    let (_, analytic) = f(params)?;
    params.check_layout(&analytic)?;
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let orig = params.values()[i];
        probe.values_mut()[i] = orig + epsilon;
        let (plus, _) = f(&probe)?;
        probe.values_mut()[i] = orig - epsilon;
        let (minus, _) = f(&probe)?;
        probe.values_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic.values()[i];
        worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}
