//! Gaussian kernels, stable log-space reductions and the reparameterization map.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `0.5 * ln(2 * pi)`.
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Smallest sigma a [`LatentParams`] will hold; smaller positive values are raised to it.
pub const MIN_SIGMA: f64 = 1e-6;

/// Per-sample Gaussian latent parameters, one `(mu, sigma)` pair per dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentParams {
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

impl LatentParams {
    pub fn new(mu: Vec<f64>, mut sigma: Vec<f64>) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::Empty("latent parameters"));
        }
        if mu.len() != sigma.len() {
            return Err(Error::LengthMismatch {
                what: "sigma",
                expected: mu.len(),
                found: sigma.len(),
            });
        }
        for s in sigma.iter_mut() {
            if !(*s > 0.0) || !s.is_finite() {
                return Err(Error::InvalidSigma(*s));
            }
            *s = s.max(MIN_SIGMA);
        }
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("latent mean".into()));
        }
        Ok(Self { mu, sigma })
    }

    pub fn standard(dim: usize) -> Result<Self> {
        Self::new(alloc::vec![0.0; dim], alloc::vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }
}

pub fn gaussian_log_pdf(z: f64, mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidSigma(sigma));
    }
    let d = (z - mu) / sigma;
    Ok(-LN_SQRT_2PI - sigma.ln() - 0.5 * d * d)
}

/// `sum_i ln N(z[i]; mu[i], sigma[i])`.
pub fn joint_log_density(z: &[f64], params: &LatentParams) -> Result<f64> {
    joint_log_density_raw(z, params.mu(), params.sigma())
}

pub(crate) fn joint_log_density_raw(z: &[f64], mu: &[f64], sigma: &[f64]) -> Result<f64> {
    if z.len() != mu.len() {
        return Err(Error::LengthMismatch {
            what: "latent point",
            expected: mu.len(),
            found: z.len(),
        });
    }
    z.iter()
        .zip(mu)
        .zip(sigma)
        .map(|((&z, &m), &s)| gaussian_log_pdf(z, m, s))
        .sum()
}

/// `ln sum_k exp(xs[k])`, shifted by the maximum.
pub fn log_sum_exp(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Empty("log_sum_exp input"));
    }
    Ok(log_sum_exp_unchecked(xs))
}

pub(crate) fn log_sum_exp_unchecked(xs: &[f64]) -> f64 {
    let mx = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if mx.is_infinite() {
        return mx;
    }
    let s: f64 = xs.iter().map(|x| (x - mx).exp()).sum();
    mx + s.ln()
}

/// `z[i] = mu[i] + sigma[i] * eps[i]`.
pub fn reparameterize(params: &LatentParams, eps: &[f64]) -> Result<Vec<f64>> {
    if eps.len() != params.dim() {
        return Err(Error::LengthMismatch {
            what: "noise",
            expected: params.dim(),
            found: eps.len(),
        });
    }
    Ok(params
        .mu
        .iter()
        .zip(&params.sigma)
        .zip(eps)
        .map(|((m, s), e)| m + s * e)
        .collect())
}
