//! Central finite-difference verification of tape gradients.

use crate::Matrix64;

use super::NumericsError;

/// Compares analytic gradients against central finite differences.
///
/// `loss_and_grad` evaluates the loss at the given parameter values and
/// returns the loss together with one gradient matrix per parameter (shapes
/// matching `params`). Returns the maximum over all parameter entries of
/// `|g_analytic - g_fd| / max(1, |g_fd|)`.
pub fn grad_check(
    params: &[Matrix64],
    mut loss_and_grad: impl FnMut(&[Matrix64]) -> Result<(f64, Vec<Matrix64>), NumericsError>,
    eps: f64,
) -> Result<f64, NumericsError> {
    assert!(eps > 0.0, "eps must be positive");
    let (loss, grads) = loss_and_grad(params)?;
    if !loss.is_finite() {
        return Err(NumericsError::NonFinite("grad_check loss"));
    }

    let mut work: Vec<Matrix64> = params.to_vec();
    let mut max_rel = 0.0_f64;
    for (pi, param) in params.iter().enumerate() {
        for i in 0..param.data().len() {
            let orig = work[pi].data()[i];

            work[pi].data_mut()[i] = orig + eps;
            let (plus, _) = loss_and_grad(&work)?;
            work[pi].data_mut()[i] = orig - eps;
            let (minus, _) = loss_and_grad(&work)?;
            work[pi].data_mut()[i] = orig;

            if !plus.is_finite() || !minus.is_finite() {
                return Err(NumericsError::NonFinite("grad_check probe"));
            }
            let fd = (plus - minus) / (2.0 * eps);
            let analytic = grads[pi].data()[i];
            let rel = (analytic - fd).abs() / fd.abs().max(1.0);
            max_rel = max_rel.max(rel);
        }
    }
    Ok(max_rel)
}
