//! Modified KL regularizer pulling `mu` toward `gamma * mu` and `sigma` toward 1.

use serde::{Deserialize, Serialize};

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::autodiff::{Tape, Var};
use crate::prob::LatentParams;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegConfig {
    gamma: f64,
}

impl RegConfig {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidArgument(alloc::format!("gamma must be in [0, 1], got {gamma}")));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// `1/2 sum_i (((1 - gamma) mu_i)^2 + sigma_i^2 - ln sigma_i^2 - 1)` for one sample.
pub fn kl_reg(params: &LatentParams, reg: RegConfig) -> f64 {
    let k = 1.0 - reg.gamma;
    0.5 * params
        .mu()
        .iter()
        .zip(params.sigma())
        .map(|(&m, &s)| (k * m) * (k * m) + s * s - (s * s).ln() - 1.0)
        .sum::<f64>()
}

/// Batch mean of [`kl_reg`] over rows of `mu` and `sigma` (both B x N).
pub fn kl_reg_on_tape(tape: &mut Tape, mu: Var, sigma: Var, reg: RegConfig) -> Result<Var> {
    let (b, n) = tape.shape(mu);
    tape.expect_shape(sigma, (b, n))?;
    let km = tape.scale(mu, 1.0 - reg.gamma);
    let km2 = tape.square(km);
    let s2 = tape.square(sigma);
    let ln_s2 = tape.ln(s2);
    let a = tape.add(km2, s2)?;
    let c = tape.sub(a, ln_s2)?;
    let total = tape.sum(c);
    let shifted = tape.add_scalar(total, -((b * n) as f64));
    Ok(tape.scale(shifted, 0.5 / b as f64))
}

/// `l1 + l2`, refusing non-finite components.
pub fn total_loss(l1: f64, l2: f64) -> Result<f64> {
    if !l1.is_finite() || !l2.is_finite() {
        return Err(Error::NonFinite(alloc::format!("loss components l1={l1}, l2={l2}")));
    }
    Ok(l1 + l2)
}

/// Tape version of [`total_loss`]; checks the forward values.
pub fn total_loss_on_tape(tape: &mut Tape, l1: Var, l2: Var) -> Result<Var> {
    total_loss(tape.value(l1).item(), tape.value(l2).item())?;
    tape.add(l1, l2)
}
