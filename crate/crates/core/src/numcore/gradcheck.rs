//! Central finite-difference gradient checking.

use super::Matrix;
use crate::error::{Error, Result};

/// Relative error `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Worst relative error between `analytic` and central differences of `loss`
/// over every coordinate of `params`.
pub fn grad_check<F>(mut loss: F, params: &[Matrix], analytic: &[Matrix], eps: f64) -> Result<f64>
where
    F: FnMut(&[Matrix]) -> f64,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::param("eps", format!("must be > 0, got {eps}")));
    }
    if params.len() != analytic.len() || params.iter().zip(analytic).any(|(p, a)| p.shape() != a.shape()) {
        return Err(Error::shape("grad_check", "analytic gradients do not match params"));
    }
    let mut probe = params.to_vec();
    let mut worst = 0.0_f64;
    for (i, a) in analytic.iter().enumerate() {
        for j in 0..a.len() {
            let orig = probe[i].data()[j];
            probe[i].data_mut()[j] = orig + eps;
            let up = loss(&probe);
            probe[i].data_mut()[j] = orig - eps;
            let down = loss(&probe);
            probe[i].data_mut()[j] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::Numeric { term: format!("loss probe at param {i}, coordinate {j}") });
            }
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(relative_error(a.data()[j], numeric));
        }
    }
    Ok(worst)
}
