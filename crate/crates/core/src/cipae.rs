//! Probabilistic auto-encoding: each pixel is a two-class Bernoulli target and
//! the reconstruction is the posterior of "on" given the latent draw. There is
//! no decoder network; the record window is the decoder.

use alloc::sync::Arc;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::autodiff::{Tape, Var};
use crate::posterior::mix_on_tape;
use crate::prob::LatentParams;
use crate::recorder::RecordSet;
use crate::{Error, Matrix, Result};

/// Clamp applied to reconstructions inside the binary cross-entropy.
pub const BCE_CLAMP: f64 = 1e-12;

/// Per-pixel probability of the "on" outcome; "off" is `1 - y1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelTargets {
    pub y1: Vec<f64>,
}

/// Maps raw pixels to `[0, 1]`. Images whose maximum exceeds 1 are taken to
/// be 8-bit and divided by 255.
pub fn pixel_targets(image: &[f64]) -> Result<PixelTargets> {
    if let Some(&p) = image.iter().find(|p| !p.is_finite()) {
        return Err(Error::NonFinite(alloc::format!("pixel value {p}")));
    }
    if let Some(&p) = image.iter().find(|&&p| p < 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("negative pixel value {p}")));
    }
    let scale = if image.iter().any(|&p| p > 1.0) { 255.0 } else { 1.0 };
    let y1: Vec<f64> = image.iter().map(|&p| p / scale).collect();
    if let Some(&p) = y1.iter().find(|&&p| p > 1.0) {
        return Err(Error::InvalidArgument(alloc::format!("pixel value {} above 255", p * 255.0)));
    }
    Ok(PixelTargets { y1 })
}

/// Batch reconstruction `B x J` on the tape: the mean over draws of the
/// clamped posterior of every pixel's "on" class. `records` must carry pixel
/// targets; `dim` restricts the densities to one latent dimension.
pub fn reconstruct_on_tape(
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

fn single(theta: &LatentParams, records: &RecordSet, draws: usize, eps: f64, noise: &Matrix, dim: Option<usize>) -> Result<Vec<f64>> {
    if draws < 1 {
        return Err(Error::InvalidArgument("Monte Carlo number must be >= 1".into()));
    }
    if noise.shape() != (draws, theta.dim()) {
        return Err(Error::ShapeMismatch {
            node: 0,
            op: "reconstruction noise",
            left: noise.shape(),
            right: (draws, theta.dim()),
        });
    }
    let mut tape = Tape::new();
    let mu = tape.constant(Matrix::row_vector(theta.mu()));
    let sigma = tape.constant(Matrix::row_vector(theta.sigma()));
    let rows: Vec<Matrix> = (0..draws).map(|c| Matrix::row_vector(noise.row(c))).collect();
    let r = reconstruct_on_tape(&mut tape, mu, sigma, records, &rows, eps, dim)?;
    Ok(tape.value(r).data().to_vec())
}

/// Full reconstruction of one sample with one draw per row of `noise`.
pub fn reconstruct(theta: &LatentParams, records: &RecordSet, draws: usize, eps_stable: f64, noise: &Matrix) -> Result<Vec<f64>> {
    single(theta, records, draws, eps_stable, noise, None)
}

/// Reconstruction that sees only latent dimension `dim` (0-based). The draw
/// for that dimension is the `dim`-th coordinate of the joint draw.
pub fn reconstruct_single_latent(
    dim: usize,
    theta: &LatentParams,
    records: &RecordSet,
    draws: usize,
    eps_stable: f64,
    noise: &Matrix,
) -> Result<Vec<f64>> {
    if dim >= theta.dim() {
        return Err(Error::IndexOutOfRange { index: dim, len: theta.dim() });
    }
    single(theta, records, draws, eps_stable, noise, Some(dim))
}

fn clamp(r: f64) -> f64 {
    r.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP)
}

/// `-(1/J) sum_j [y_j ln r_j + (1 - y_j) ln(1 - r_j)]`, `r` clamped away from 0 and 1.
pub fn bce_loss(reconstruction: &[f64], targets: &PixelTargets) -> Result<f64> {
    if reconstruction.len() != targets.y1.len() {
        return Err(Error::LengthMismatch {
            what: "reconstruction",
            expected: targets.y1.len(),
            found: reconstruction.len(),
        });
    }
    let j = targets.y1.len() as f64;
    let s: f64 = reconstruction
        .iter()
        .zip(&targets.y1)
        .map(|(&r, &y)| {
            let r = clamp(r);
            y * r.ln() + (1.0 - y) * (1.0 - r).ln()
        })
        .sum();
    Ok(-s / j)
}

/// Batch mean of [`bce_loss`]: `recon` and `targets` are both B x J.
pub fn bce_on_tape(tape: &mut Tape, recon: Var, targets: &Matrix) -> Result<Var> {
    tape.expect_shape(recon, targets.shape())?;
    let (b, j) = targets.shape();
    let lo = tape.max_const(recon, BCE_CLAMP);
    let r = tape.min_const(lo, 1.0 - BCE_CLAMP);
    let ln_r = tape.ln(r);
    let neg = tape.neg(r);
    let one_minus = tape.add_scalar(neg, 1.0);
    let ln_1r = tape.ln(one_minus);
    let y = tape.constant(targets.clone());
    let y0 = tape.constant(targets.map(|v| 1.0 - v));
    let a = tape.mul(y, ln_r)?;
    let c = tape.mul(y0, ln_1r)?;
    let both = tape.add(a, c)?;
    let s = tape.sum(both);
    Ok(tape.scale(s, -1.0 / (b * j) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recorder::{RecordEntry, TargetKind};
    use crate::rng::NoiseSource;
    use alloc::vec;
    use proptest::prelude::*;

    fn records(entries: &[(Vec<f64>, Vec<f64>, Vec<f64>)]) -> RecordSet {
        let e: Vec<_> = entries.iter().map(|(t, m, s)| RecordEntry::new(t.clone(), m.clone(), s.clone())).collect();
        RecordSet::from_entries(&e, TargetKind::Soft).unwrap()
    }

    fn random_records(rng: &mut NoiseSource, n: usize, dim: usize, j: usize) -> RecordSet {
        let e: Vec<_> = (0..n)
            .map(|_| {
                (
                    (0..j).map(|_| rng.uniform(0.0, 1.0)).collect(),
                    (0..dim).map(|_| rng.uniform(-2.0, 2.0)).collect(),
                    (0..dim).map(|_| rng.uniform(0.3, 1.5)).collect(),
                )
            })
            .collect();
        records(&e)
    }

    /// Linear-space per-pixel two-class posterior, optionally one dimension only.
    fn brute_force(z: &[f64], r: &RecordSet, dim: Option<usize>) -> Vec<f64> {
        let dims: Vec<usize> = match dim {
            Some(d) => vec![d],
            None => (0..z.len()).collect(),
        };
        let dens = |k: usize| -> f64 {
            dims.iter()
                .map(|&i| {
                    let (m, s) = (r.mu(k)[i], r.sigma(k)[i]);
                    (-(z[i] - m) * (z[i] - m) / (2.0 * s * s)).exp() / (s * (2.0 * core::f64::consts::PI).sqrt())
                })
                .product()
        };
        let g: f64 = (0..r.len()).map(dens).sum();
        (0..r.target_dim())
            .map(|j| (0..r.len()).map(|k| r.targets(k)[j] * dens(k)).sum::<f64>() / g)
            .collect()
    }

    #[test]
    fn pixel_scaling() {
        assert_eq!(pixel_targets(&[0.0, 255.0, 128.0]).unwrap().y1, vec![0.0, 1.0, 128.0 / 255.0]);
        assert_eq!(pixel_targets(&[0.0, 0.5, 1.0]).unwrap().y1, vec![0.0, 0.5, 1.0]);
        assert!(pixel_targets(&[-1.0, 0.5]).is_err());
        assert!(pixel_targets(&[300.0]).is_err());
        assert!(pixel_targets(&[f64::NAN]).is_err());
    }

    #[test]
    fn single_entry_reconstructs_itself() {
        let r = records(&[(vec![0.1, 0.9, 0.0, 1.0], vec![0.4, -0.2], vec![0.5, 0.8])]);
        let theta = LatentParams::new(vec![3.0, 1.0], vec![0.2, 0.3]).unwrap();
        let noise = Matrix::from_rows(&[[0.5, -0.5], [1.0, 0.0]]).unwrap();
        let out = reconstruct(&theta, &r, 2, 1e-30, &noise).unwrap();
        // weights collapse to 1; only log-space rounding remains
        for (a, b) in out.iter().zip([0.1, 0.9, 0.0, 1.0]) {
            assert!((a - b).abs() < 1e-13);
        }
        for d in 0..2 {
            let out = reconstruct_single_latent(d, &theta, &r, 2, 1e-30, &noise).unwrap();
            assert!((out[1] - 0.9).abs() < 1e-13);
        }
    }

    #[test]
    fn equal_thetas_average_targets() {
        let r = records(&[(vec![0.2, 1.0], vec![0.0], vec![1.0]), (vec![0.6, 0.0], vec![0.0], vec![1.0])]);
        let theta = LatentParams::new(vec![0.7], vec![0.4]).unwrap();
        let out = reconstruct(&theta, &r, 1, 1e-30, &Matrix::zeros(1, 1)).unwrap();
        assert!((out[0] - 0.4).abs() < 1e-15 && (out[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = NoiseSource::new(17);
        let r = random_records(&mut rng, 6, 2, 4);
        let theta = LatentParams::new(vec![0.3, -0.6], vec![0.7, 0.9]).unwrap();
        let noise = rng.normal_matrix(3, 2);
        let out = reconstruct(&theta, &r, 3, 0.0, &noise).unwrap();
        let mut expect = vec![0.0; 4];
        for c in 0..3 {
            let z: Vec<f64> = (0..2).map(|i| theta.mu()[i] + theta.sigma()[i] * noise.get(c, i)).collect();
            for (e, v) in expect.iter_mut().zip(brute_force(&z, &r, None)) {
                *e += v / 3.0;
            }
        }
        for (a, b) in out.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12 * b.max(1e-12));
        }
    }

    #[test]
    fn single_latent_matches_brute_force() {
        let mut rng = NoiseSource::new(5);
        let r = random_records(&mut rng, 6, 3, 4);
        let theta = LatentParams::new(vec![0.3, -0.6, 1.1], vec![0.7, 0.9, 0.4]).unwrap();
        let noise = rng.normal_matrix(2, 3);
        for d in 0..3 {
            let out = reconstruct_single_latent(d, &theta, &r, 2, 0.0, &noise).unwrap();
            let mut expect = vec![0.0; 4];
            for c in 0..2 {
                let z: Vec<f64> = (0..3).map(|i| theta.mu()[i] + theta.sigma()[i] * noise.get(c, i)).collect();
                for (e, v) in expect.iter_mut().zip(brute_force(&z, &r, Some(d))) {
                    *e += v / 2.0;
                }
            }
            for (a, b) in out.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12 * b.max(1e-12));
            }
        }
        assert!(reconstruct_single_latent(3, &theta, &r, 2, 0.0, &noise).is_err());
    }

    #[test]
    fn one_dimension_restriction_is_whole() {
        let mut rng = NoiseSource::new(2);
        let r = random_records(&mut rng, 9, 1, 5);
        let theta = LatentParams::new(vec![0.2], vec![0.6]).unwrap();
        let noise = rng.normal_matrix(2, 1);
        assert_eq!(
            reconstruct(&theta, &r, 2, 1e-30, &noise).unwrap(),
            reconstruct_single_latent(0, &theta, &r, 2, 1e-30, &noise).unwrap()
        );
    }

    #[test]
    fn bce_examples() {
        let t = PixelTargets { y1: vec![0.0, 1.0, 1.0] };
        assert!(bce_loss(&[0.0, 1.0, 1.0], &t).unwrap() <= 1e-11);
        let t2 = PixelTargets { y1: vec![0.3, 0.9, 0.0] };
        assert!((bce_loss(&[0.5; 3], &t2).unwrap() - 2.0f64.ln()).abs() < 1e-15);
        let e = (-1.0f64).exp();
        assert!((bce_loss(&[e], &PixelTargets { y1: vec![1.0] }).unwrap() - 1.0).abs() < 1e-15);
        assert!(bce_loss(&[0.5], &t).is_err());
    }

    #[test]
    fn tape_bce_matches_plain() {
        let recon = Matrix::from_rows(&[[0.2, 0.9, 0.0], [1.0, 0.4, 0.6]]).unwrap();
        let targets = Matrix::from_rows(&[[0.0, 1.0, 0.5], [0.7, 0.1, 1.0]]).unwrap();
        let mut tape = Tape::new();
        let r = tape.constant(recon.clone());
        let l = bce_on_tape(&mut tape, r, &targets).unwrap();
        let expect = (0..2)
            .map(|b| bce_loss(recon.row(b), &PixelTargets { y1: targets.row(b).to_vec() }).unwrap())
            .sum::<f64>()
            / 2.0;
        assert!((tape.value(l).item() - expect).abs() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn complement_and_range(seed in any::<u64>(), n in 1usize..12, dim in 1usize..4, j in 1usize..6) {
            let mut rng = NoiseSource::new(seed);
            let r = random_records(&mut rng, n, dim, j);
            let (t, mu, s) = r.to_matrices();
            let off = RecordSet::from_matrices(t.map(|v| 1.0 - v), mu, s, TargetKind::Soft).unwrap();
            let theta = LatentParams::new(
                (0..dim).map(|_| rng.uniform(-2.0, 2.0)).collect(),
                (0..dim).map(|_| rng.uniform(0.3, 1.5)).collect(),
            ).unwrap();
            let noise = rng.normal_matrix(2, dim);
            let on = reconstruct(&theta, &r, 2, 0.0, &noise).unwrap();
            let off = reconstruct(&theta, &off, 2, 0.0, &noise).unwrap();
            for (a, b) in on.iter().zip(&off) {
                prop_assert!((a + b - 1.0).abs() <= 1e-9);
                prop_assert!((0.0..=1.0 + 1e-12).contains(a));
            }
        }
    }
}
