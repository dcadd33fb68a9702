//! Built-in correctness checks run by `cipnn selftest`.

use cipnn_core::autodiff::{grad_check_params, ParamStore, Tape};
use cipnn_core::encoder::{Activation, Encoder, EncoderConfig};
use cipnn_core::posterior::{cross_entropy_on_tape, posterior_mc, posterior_on_tape};
use cipnn_core::prob::LatentParams;
use cipnn_core::recorder::{RecordSet, TargetKind};
use cipnn_core::regularization::{kl_reg_on_tape, RegConfig};
use cipnn_core::rng::NoiseSource;
use cipnn_core::Matrix;

/// Posterior by direct summation of densities in linear space, one class
/// term per draw averaged over the rows of `noise`.
pub fn brute_force_posterior(mu: &[f64], sigma: &[f64], records: &RecordSet, noise: &Matrix) -> Vec<f64> {
    let m = records.target_dim();
    let mut out = vec![0.0; m];
    for c in 0..noise.rows() {
        let z: Vec<f64> = (0..mu.len()).map(|i| mu[i] + sigma[i] * noise.get(c, i)).collect();
        let mut g = 0.0;
        let mut h = vec![0.0; m];
        for k in 0..records.len() {
            let mut dens = 1.0;
            for (i, zi) in z.iter().enumerate() {
                let (mk, sk) = (records.mu(k)[i], records.sigma(k)[i]);
                let u = (zi - mk) / sk;
                dens *= (-0.5 * u * u).exp() / (sk * (2.0 * std::f64::consts::PI).sqrt());
            }
            g += dens;
            for (l, hl) in h.iter_mut().enumerate() {
                *hl += records.targets(k)[l] * dens;
            }
        }
        for l in 0..m {
            out[l] += h[l] / g / noise.rows() as f64;
        }
    }
    out
}

/// A random one-hot record set whose densities stay well inside `f64` range.
pub fn random_records(rng: &mut NoiseSource, n: usize, dim: usize, classes: usize) -> RecordSet {
    let mut t = Matrix::zeros(n, classes);
    for k in 0..n {
        t.set(k, rng.below(classes), 1.0);
    }
    let mu = Matrix::from_vec(n, dim, (0..n * dim).map(|_| rng.uniform(-1.5, 1.5)).collect()).expect("sized");
    let sigma = Matrix::from_vec(n, dim, (0..n * dim).map(|_| rng.uniform(0.5, 1.5)).collect()).expect("sized");
    RecordSet::from_matrices(t, mu, sigma, TargetKind::OneHot).expect("valid records")
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Largest relative gap between the log-space estimator and the oracle.
pub fn oracle_gap(instances: usize, seed: u64) -> f64 {
    let mut rng = NoiseSource::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let dim = 1 + rng.below(3);
        let classes = 1 + rng.below(4);
        let n = 1 + rng.below(50);
        let draws = 1 + rng.below(4);
        let records = random_records(&mut rng, n, dim, classes);
        let mu: Vec<f64> = (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let sigma: Vec<f64> = (0..dim).map(|_| rng.uniform(0.3, 1.2)).collect();
        let noise = rng.normal_matrix(draws, dim);
        let theta = LatentParams::new(mu.clone(), sigma.clone()).expect("valid");
        let got = posterior_mc(&theta, &records, draws, 0.0, &noise).expect("posterior");
        let want = brute_force_posterior(&mu, &sigma, &records, &noise);
        for (a, b) in got.probs.iter().zip(&want) {
            worst = worst.max((a - b).abs() / b.abs().max(1e-300));
        }
    }
    worst
}

/// End-to-end loss gradient against central differences on a small
/// encoder with 5 records, N=2 and m=3. Returns the maximum relative error.
pub fn end_to_end_grad_error(seed: u64) -> f64 {
    let mut rng = NoiseSource::new(seed);
    let records = random_records(&mut rng, 5, 2, 3);
    let mut store = ParamStore::new();
    let encoder = Encoder::init(
        EncoderConfig {
            input_dim: 4,
            hidden_dims: vec![6],
            latent_dim: 2,
            activation: Activation::Tanh,
            seed,
        },
        &mut store,
    )
    .expect("encoder");
    let x = Matrix::from_vec(3, 4, (0..12).map(|_| rng.uniform(-1.0, 1.0)).collect()).expect("sized");
    let mut targets = Matrix::zeros(3, 3);
    for r in 0..3 {
        targets.set(r, r, 1.0);
    }
    let noise: Vec<Matrix> = (0..2).map(|_| rng.normal_matrix(1, 2)).collect();
    let reg = RegConfig::new(0.9).expect("gamma");
    let check = grad_check_params(
        &mut store,
        |tape: &mut Tape, store: &ParamStore| {
            let xv = tape.constant(x.clone());
            let enc = encoder.forward(tape, store, xv)?;
            let p = posterior_on_tape(tape, enc.mu, enc.sigma, &records, &noise, 1e-30, None)?;
            let l1 = cross_entropy_on_tape(tape, p, &targets)?;
            let l2 = kl_reg_on_tape(tape, enc.mu, enc.sigma, reg)?;
            tape.add(l1, l2)
        },
        1e-5,
    )
    .expect("grad check");
    check.max_rel_error
}

pub fn run_all() -> Vec<CheckResult> {
    let gap = oracle_gap(200, 11);
    let grad = end_to_end_grad_error(5);
    vec![
        CheckResult {
            name: "oracle equivalence",
            passed: gap <= 1e-8,
            detail: format!("max relative gap {gap:.3e} over 200 instances"),
        },
        CheckResult {
            name: "gradient check",
            passed: grad <= 1e-4,
            detail: format!("max relative error {grad:.3e}"),
        },
    ]
}
