//! Monte Carlo class posterior over a record window, and its loss.
//!
//! For a draw `z`, with Gaussian joint densities `d_k(z)` of each record,
//!
//! ```text
//! H_l(z) = sum_k y_l(k) d_k(z)      G(z) = sum_k d_k(z)
//! P(y_l | x) ~ 1/C sum_c max(H_l(z_c), eps) / max(G(z_c), eps)
//! ```
//!
//! Everything is evaluated in log space; the clamp compares against `ln eps`.

use alloc::sync::Arc;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::autodiff::{ParamStore, Tape, Var};
use crate::encoder::Encoder;
use crate::prob::{joint_log_density_raw, log_sum_exp_unchecked, LatentParams};
use crate::recorder::RecordSet;
use crate::rng::NoiseSource;
use crate::{Error, Matrix, Result};

/// Default stable number: effectively zero but never reached by real mass.
pub const DEFAULT_EPS_STABLE: f64 = 1e-30;

/// Floor applied to probabilities inside the cross-entropy only.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorEstimate {
    pub probs: Vec<f64>,
    pub draws: usize,
}

impl PosteriorEstimate {
    pub fn predicted(&self) -> usize {
        argmax(&self.probs)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// `(ln H_l(z) for every l, ln G(z))` at a fixed point `z`.
///
/// `dim` restricts each joint density to one latent dimension.
pub fn log_h_and_g_dim(z: &[f64], records: &RecordSet, dim: Option<usize>) -> Result<(Vec<f64>, f64)> {
    if records.is_empty() {
        return Err(Error::Empty("record set"));
    }
    let n = records.latent_dim();
    if z.len() != n {
        return Err(Error::LengthMismatch {
            what: "latent point",
            expected: n,
            found: z.len(),
        });
    }
    if let Some(d) = dim {
        if d >= n {
            return Err(Error::IndexOutOfRange { index: d, len: n });
        }
    }
    let mut ld = Vec::with_capacity(records.len());
    for k in 0..records.len() {
        let v = match dim {
            None => joint_log_density_raw(z, records.mu(k), records.sigma(k))?,
            Some(d) => joint_log_density_raw(&z[d..=d], &records.mu(k)[d..=d], &records.sigma(k)[d..=d])?,
        };
        ld.push(v);
    }
    let log_g = log_sum_exp_unchecked(&ld);
    let m = records.target_dim();
    let mut terms = Vec::with_capacity(records.len());
    let log_h = (0..m)
        .map(|l| {
            terms.clear();
            terms.extend(
                (0..records.len())
                    .filter(|&k| records.targets(k)[l] > 0.0)
                    .map(|k| records.targets(k)[l].ln() + ld[k]),
            );
            log_sum_exp_unchecked(&terms)
        })
        .collect();
    Ok((log_h, log_g))
}

pub fn log_h_and_g(z: &[f64], records: &RecordSet) -> Result<(Vec<f64>, f64)> {
    log_h_and_g_dim(z, records, None)
}

/// `max_l H_l(z) / G(z)`: how strongly one class dominates at `z`.
pub fn conditional_confidence(z: &[f64], records: &RecordSet) -> Result<f64> {
    let (log_h, log_g) = log_h_and_g(z, records)?;
    Ok(log_h.iter().map(|h| (h - log_g).exp()).fold(0.0, f64::max))
}

fn ln_eps(eps: f64) -> Result<f64> {
    if !(eps >= 0.0) || eps.is_infinite() {
        return Err(Error::InvalidArgument(alloc::format!("stable number must be >= 0, got {eps}")));
    }
    Ok(if eps == 0.0 { f64::NEG_INFINITY } else { eps.ln() })
}

/// `z = mu + sigma * noise` with `noise` either B x N or a single 1 x N row
/// shared by the whole batch.
pub fn reparameterize_on_tape(tape: &mut Tape, mu: Var, sigma: Var, noise: &Matrix) -> Result<Var> {
    let (b, n) = tape.shape(mu);
    let full = if noise.rows() == 1 && b != 1 {
        if noise.cols() != n {
            return Err(Error::LengthMismatch {
                what: "noise row",
                expected: n,
                found: noise.cols(),
            });
        }
        let mut m = Matrix::zeros(b, n);
        for r in 0..b {
            m.row_mut(r).copy_from_slice(noise.row(0));
        }
        m
    } else {
        noise.clone()
    };
    let e = tape.constant(full);
    let scaled = tape.mul(sigma, e)?;
    tape.add(mu, scaled)
}

/// Clamped density ratios `max(H_l, eps) / max(G, eps)` at the points `z`
/// (B x N), one row per point. `values` supplies `y_l(k)` (at least `len`
/// rows); ordinarily it is the record set's own targets.
pub(crate) fn ratio_on_tape(
    tape: &mut Tape,
    z: Var,
    records: &RecordSet,
    values: &Arc<Matrix>,
    ln_eps: f64,
    dim: Option<usize>,
) -> Result<Var> {
    if records.is_empty() {
        return Err(Error::Empty("record set"));
    }
    let ld = tape.gaussian_log_density(z, &records.mu, &records.sigma, records.len, dim)?;
    let log_g = tape.log_sum_exp_rows(ld)?;
    let log_h = tape.log_mix(ld, values)?;
    let h = tape.max_const(log_h, ln_eps);
    let g = tape.max_const(log_g, ln_eps);
    let diff = tape.sub_col(h, g)?;
    Ok(tape.exp(diff))
}

/// Batch posterior `B x m` averaged over one draw per entry of `noise`.
///
/// Gradients reach `mu` and `sigma` only; the records are constants.
pub fn posterior_on_tape(
    tape: &mut Tape,
    mu: Var,
    sigma: Var,
    records: &RecordSet,
    noise: &[Matrix],
    eps_stable: f64,
    dim: Option<usize>,
) -> Result<Var> {
    mix_on_tape(tape, mu, sigma, records, &Arc::clone(&records.targets), noise, eps_stable, dim)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn mix_on_tape(
    tape: &mut Tape,
    mu: Var,
    sigma: Var,
    records: &RecordSet,
    values: &Arc<Matrix>,
    noise: &[Matrix],
    eps_stable: f64,
    dim: Option<usize>,
) -> Result<Var> {
    if noise.is_empty() {
        return Err(Error::InvalidArgument("at least one Monte Carlo draw is required".into()));
    }
    let (_, n) = tape.shape(mu);
    if n != records.latent_dim() {
        return Err(Error::LengthMismatch {
            what: "latent dimension",
            expected: records.latent_dim(),
            found: n,
        });
    }
    let le = ln_eps(eps_stable)?;
    let mut acc: Option<Var> = None;
    for e in noise {
        let z = reparameterize_on_tape(tape, mu, sigma, e)?;
        let r = ratio_on_tape(tape, z, records, values, le, dim)?;
        acc = Some(match acc {
            None => r,
            Some(a) => tape.add(a, r)?,
        });
    }
    let total = acc.expect("non-empty noise");
    Ok(tape.scale(total, 1.0 / noise.len() as f64))
}

/// Mean over the batch of `-sum_l t_l ln max(p_l, 1e-12)`.
pub fn cross_entropy_on_tape(tape: &mut Tape, probs: Var, targets: &Matrix) -> Result<Var> {
    tape.expect_shape(probs, targets.shape())?;
    let floored = tape.max_const(probs, PROB_FLOOR);
    let logp = tape.ln(floored);
    let t = tape.constant(targets.clone());
    let picked = tape.mul(logp, t)?;
    let s = tape.sum(picked);
    Ok(tape.scale(s, -1.0 / targets.rows() as f64))
}

/// Single-sample posterior for `theta` with one draw per row of `noise` (C x N).
pub fn posterior_mc(
    theta: &LatentParams,
    records: &RecordSet,
    draws: usize,
    eps_stable: f64,
    noise: &Matrix,
) -> Result<PosteriorEstimate> {
    if draws < 1 {
        return Err(Error::InvalidArgument("Monte Carlo number must be >= 1".into()));
    }
    if noise.rows() != draws || noise.cols() != theta.dim() {
        return Err(Error::ShapeMismatch {
            node: 0,
            op: "posterior noise",
            left: noise.shape(),
            right: (draws, theta.dim()),
        });
    }
    let mut tape = Tape::new();
    let mu = tape.constant(Matrix::row_vector(theta.mu()));
    let sigma = tape.constant(Matrix::row_vector(theta.sigma()));
    let rows: Vec<Matrix> = (0..draws).map(|c| Matrix::row_vector(noise.row(c))).collect();
    let p = posterior_on_tape(&mut tape, mu, sigma, records, &rows, eps_stable, None)?;
    Ok(PosteriorEstimate {
        probs: tape.value(p).data().to_vec(),
        draws,
    })
}

/// `-sum_l target_l ln max(p_l, 1e-12)`.
pub fn classification_loss(estimate: &PosteriorEstimate, target: &[f64]) -> f64 {
    -estimate
        .probs
        .iter()
        .zip(target)
        .filter(|(_, &t)| t != 0.0)
        .map(|(&p, &t)| t * p.max(PROB_FLOOR).ln())
        .sum::<f64>()
}

/// Noise for test-time prediction of sample `index` under `seed`.
pub fn prediction_noise(seed: u64, index: u64, draws: usize, dim: usize) -> Matrix {
    NoiseSource::derived(seed, index).normal_matrix(draws, dim)
}

/// Encodes `x` and classifies it against `records`.
pub fn predict(
    encoder: &Encoder,
    store: &ParamStore,
    x: &[f64],
    records: &RecordSet,
    draws: usize,
    eps_stable: f64,
    seed: u64,
) -> Result<(PosteriorEstimate, usize)> {
    let theta = encoder.encode(store, x)?;
    let noise = prediction_noise(seed, 0, draws, theta.dim());
    let est = posterior_mc(&theta, records, draws, eps_stable, &noise)?;
    let class = est.predicted();
    Ok((est, class))
}

/// Posteriors for a batch of rows, sample `i` using
/// [`prediction_noise`]`(seed, first_index + i, ..)`.
#[allow(clippy::too_many_arguments)]
pub fn predict_batch(
    encoder: &Encoder,
    store: &ParamStore,
    x: &Matrix,
    records: &RecordSet,
    draws: usize,
    eps_stable: f64,
    seed: u64,
    first_index: u64,
) -> Result<Matrix> {
    if draws < 1 {
        return Err(Error::InvalidArgument("Monte Carlo number must be >= 1".into()));
    }
    let (mu, sigma) = encoder.encode_matrix(store, x)?;
    let (b, n) = mu.shape();
    let mut noise = alloc::vec![Matrix::zeros(b, n); draws];
    for r in 0..b {
        let e = prediction_noise(seed, first_index + r as u64, draws, n);
        for (c, m) in noise.iter_mut().enumerate() {
            m.row_mut(r).copy_from_slice(e.row(c));
        }
    }
    let mut tape = Tape::new();
    let mu = tape.constant(mu);
    let sigma = tape.constant(sigma);
    let p = posterior_on_tape(&mut tape, mu, sigma, records, &noise, eps_stable, None)?;
    Ok(tape.value(p).clone())
}
