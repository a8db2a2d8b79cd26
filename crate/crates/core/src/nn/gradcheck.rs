//! Finite-difference gradient checking.

use rand::Rng as _;

use super::{Differentiable, Tensor};
use crate::error::Result;
use crate::rng;

/// Central-difference step.
pub const STEP: f64 = 1e-5;

/// Worst relative disagreement between analytic and numeric gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_param_error: f64,
    pub max_input_error: f64,
    pub params_checked: usize,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.max_param_error.max(self.max_input_error)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_error() < tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Projected loss difference `sum r (y+ - y-)`, differencing outputs before
/// summing so the large common part cancels exactly.
fn projected_difference(r: &[f64], plus: &Tensor, minus: &Tensor) -> f64 {
    r.iter()
        .zip(plus.data().iter().zip(minus.data()))
        .map(|(r, (p, m))| r * (p - m))
        .sum()
}

/// Compares the block's backward pass with central differences of the scalar
/// loss `sum(r * forward(x))`, where `r` is a fixed random projection.
/// Every parameter and every input element is checked.
pub fn grad_check<M: Differentiable>(model: &mut M, x: &Tensor) -> Result<GradCheckReport> {
    let (y, cache) = model.forward(x)?;
    let mut proj = rng::stream(0x6772_6164, "grad_check");
    let r: Vec<f64> = (0..y.len()).map(|_| proj.gen_range(-1.0..1.0)).collect();
    let upstream = Tensor::new(y.shape(), r.clone())?;
    let analytic = model.backward(&cache, &upstream)?;

    let base = model.params();
    let mut max_param_error: f64 = 0.0;
    let mut probe = base.clone();
    for k in 0..base.len() {
        probe[k] = base[k] + STEP;
        model.set_params(&probe)?;
        let plus = model.forward(x)?.0;
        probe[k] = base[k] - STEP;
        model.set_params(&probe)?;
        let minus = model.forward(x)?.0;
        probe[k] = base[k];
        let numeric = projected_difference(&r, &plus, &minus) / (2.0 * STEP);
        max_param_error = max_param_error.max(relative_error(analytic.params[k], numeric));
    }
    model.set_params(&base)?;

    let mut max_input_error: f64 = 0.0;
    let mut xp = x.clone();
    for k in 0..x.len() {
        let v = x.data()[k];
        xp.data_mut()[k] = v + STEP;
        let plus = model.forward(&xp)?.0;
        xp.data_mut()[k] = v - STEP;
        let minus = model.forward(&xp)?.0;
        xp.data_mut()[k] = v;
        let numeric = projected_difference(&r, &plus, &minus) / (2.0 * STEP);
        max_input_error = max_input_error.max(relative_error(analytic.input.data()[k], numeric));
    }

    Ok(GradCheckReport {
        max_param_error,
        max_input_error,
        params_checked: base.len(),
    })
}
