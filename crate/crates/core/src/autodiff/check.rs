//! Central finite-difference checks of tape gradients.

use alloc::vec::Vec;

use super::{ParamStore, Tape, Var};
use crate::{Matrix, Result};

/// Outcome of a gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    /// `max_j |analytic_j - numeric_j| / max(|analytic_j|, 1e-8)`.
    pub max_rel_error: f64,
    /// Flat coordinate with the largest error.
    pub worst: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl GradCheck {
    fn from_pair(analytic: Vec<f64>, numeric: Vec<f64>) -> Self {
        let mut max_rel_error = 0.0f64;
        let mut worst = 0;
        for (j, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            let err = (a - n).abs() / a.abs().max(1e-8);
            // NaN compares false, so treat any non-finite as failure explicitly.
            if !err.is_finite() {
                max_rel_error = f64::INFINITY;
                worst = j;
                break;
            }
            if err > max_rel_error {
                max_rel_error = err;
                worst = j;
            }
        }
        Self {
            max_rel_error,
            worst,
            analytic,
            numeric,
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

/// Checks a scalar function of one 1 x n input row.
pub fn grad_check<F>(f: F, point: &[f64], step: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let eval = |x: &[f64]| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.constant(Matrix::row_vector(x));
        let out = f(&mut tape, v)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let v = tape.variable(Matrix::row_vector(point));
    let out = f(&mut tape, v)?;
    let grads = tape.gradients(out)?;
    let analytic = grads.get_or_zero(v, (1, point.len())).into_vec();

    let mut x = point.to_vec();
    let mut numeric = Vec::with_capacity(point.len());
    for j in 0..point.len() {
        let orig = x[j];
        x[j] = orig + step;
        let up = eval(&x)?;
        x[j] = orig - step;
        let down = eval(&x)?;
        x[j] = orig;
        numeric.push((up - down) / (2.0 * step));
    }
    Ok(GradCheck::from_pair(analytic, numeric))
}

/// Checks the gradient of a scalar loss with respect to every scalar in
/// `store`. The store's gradients are overwritten; values are restored.
pub fn grad_check_params<F>(store: &mut ParamStore, f: F, step: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    store.zero_grad();
    let mut tape = Tape::new();
    let out = f(&mut tape, store)?;
    tape.backward(out, store)?;
    let analytic: Vec<f64> = store
        .iter()
        .flat_map(|p| p.grad().data().iter().copied())
        .collect();
    store.zero_grad();

    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let out = f(&mut tape, store)?;
        Ok(tape.value(out).item())
    };
    let mut numeric = Vec::with_capacity(analytic.len());
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for j in 0..store.get(id).value().len() {
            let orig = store.get(id).value().data()[j];
            store.get_mut(id).value_mut().data_mut()[j] = orig + step;
            let up = eval(store)?;
            store.get_mut(id).value_mut().data_mut()[j] = orig - step;
            let down = eval(store)?;
            store.get_mut(id).value_mut().data_mut()[j] = orig;
            numeric.push((up - down) / (2.0 * step));
        }
    }
    Ok(GradCheck::from_pair(analytic, numeric))
}
