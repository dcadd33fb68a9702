//! Baseline neural decoder with a Bernoulli likelihood, trained with the same
//! encoder and regularizer as the probabilistic auto-encoder.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tape, Var};
use crate::cipae::bce_on_tape;
use crate::encoder::{Activation, Encoder, Mlp};
use crate::posterior::reparameterize_on_tape;
use crate::regularization::{kl_reg_on_tape, RegConfig};
use crate::rng::NoiseSource;
use crate::{Error, Matrix, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub latent_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub seed: u64,
}

impl DecoderConfig {
    /// `latent -> 256 -> 512 -> output`.
    pub fn mirrored(latent_dim: usize, output_dim: usize, seed: u64) -> Self {
        Self {
            latent_dim,
            hidden_dims: alloc::vec![256, 512],
            output_dim,
            seed,
        }
    }
}

/// ReLU MLP followed by a per-pixel sigmoid.
#[derive(Clone, Debug)]
pub struct Decoder {
    config: DecoderConfig,
    mlp: Mlp,
}

impl Decoder {
    pub fn init(config: DecoderConfig, store: &mut ParamStore) -> Result<Self> {
        let mut dims = Vec::with_capacity(config.hidden_dims.len() + 2);
        dims.push(config.latent_dim);
        dims.extend_from_slice(&config.hidden_dims);
        dims.push(config.output_dim);
        let mut rng = NoiseSource::derived(config.seed, 0xDEC0);
        let mlp = Mlp::new(store, &dims, Activation::Relu, &mut rng)?;
        Ok(Self { config, mlp })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.config
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, z: Var) -> Result<Var> {
        let logits = self.mlp.forward(tape, store, z)?;
        Ok(tape.sigmoid(logits))
    }

    pub fn decode(&self, store: &ParamStore, z: &[f64]) -> Result<Vec<f64>> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("decoder input".into()));
        }
        let mut tape = Tape::new();
        let zv = tape.constant(Matrix::row_vector(z));
        let out = self.forward(&mut tape, store, zv)?;
        Ok(tape.value(out).data().to_vec())
    }
}

/// Batch loss: BCE of the decoded draws (averaged over draws) plus the
/// regularizer (if any). Returns `(total, bce, reg)` nodes.
pub fn vae_loss_on_tape(
    tape: &mut Tape,
    encoder: &Encoder,
    decoder: &Decoder,
    store: &ParamStore,
    x: &Matrix,
    reg: Option<RegConfig>,
    noise: &[Matrix],
) -> Result<(Var, Var, Var)> {
    if noise.is_empty() {
        return Err(Error::InvalidArgument("at least one Monte Carlo draw is required".into()));
    }
    let xv = tape.constant(x.clone());
    let enc = encoder.forward(tape, store, xv)?;
    let mut acc: Option<Var> = None;
    for e in noise {
        let z = reparameterize_on_tape(tape, enc.mu, enc.sigma, e)?;
        let r = decoder.forward(tape, store, z)?;
        let l = bce_on_tape(tape, r, x)?;
        acc = Some(match acc {
            None => l,
            Some(a) => tape.add(a, l)?,
        });
    }
    let bce_sum = acc.expect("non-empty noise");
    let bce = tape.scale(bce_sum, 1.0 / noise.len() as f64);
    let l2 = match reg {
        Some(reg) => kl_reg_on_tape(tape, enc.mu, enc.sigma, reg)?,
        None => tape.constant(Matrix::scalar(0.0)),
    };
    let total = crate::regularization::total_loss_on_tape(tape, bce, l2)?;
    Ok((total, bce, l2))
}

/// Scalar value of [`vae_loss_on_tape`] for a single sample.
pub fn vae_step_loss(
    x: &[f64],
    encoder: &Encoder,
    decoder: &Decoder,
    store: &ParamStore,
    gamma: f64,
    noise: &Matrix,
) -> Result<f64> {
    let targets = crate::cipae::pixel_targets(x)?;
    let mut tape = Tape::new();
    let rows: Vec<Matrix> = (0..noise.rows()).map(|c| Matrix::row_vector(noise.row(c))).collect();
    let (total, _, _) = vae_loss_on_tape(
        &mut tape,
        encoder,
        decoder,
        store,
        &Matrix::row_vector(&targets.y1),
        Some(RegConfig::new(gamma)?),
        &rows,
    )?;
    Ok(tape.value(total).item())
}
