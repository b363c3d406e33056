//! Central finite differences for validating adjoints.

use super::tensor::Tensor;
use crate::error::Result;

/// Step used for parameter value `theta`: `1e-5 * (1 + |theta|)`.
pub fn fd_step(theta: f64) -> f64 {
    1e-5 * (1.0 + theta.abs())
}

/// Central-difference gradient of `loss` with respect to every element of
/// every tensor in `params`. Each element is perturbed in place and restored.
pub fn finite_difference_grads<F>(params: &mut [Tensor], mut loss: F) -> Result<Vec<Tensor>>
where
    F: FnMut(&[Tensor]) -> Result<f64>,
{
    let mut out = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let mut grad = Tensor::zeros(params[p].dims());
        for i in 0..params[p].len() {
            let theta = params[p].data()[i];
            let h = fd_step(theta);
            params[p].data_mut()[i] = theta + h;
            let up = loss(params)?;
            params[p].data_mut()[i] = theta - h;
            let down = loss(params)?;
            params[p].data_mut()[i] = theta;
            grad.data_mut()[i] = (up - down) / (2.0 * h);
        }
        out.push(grad);
    }
    Ok(out)
}

/// `||a - b|| / max(||a||, ||b||)`, or 0 when both are (numerically) zero.
pub fn relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    let diff: f64 = analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale = super::ops::l2_norm(analytic.data()).max(super::ops::l2_norm(numeric.data()));
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}
