//! Fully connected networks: the encoder `x -> (mu, sigma)` and the shared MLP
//! body also used by the VAE decoder.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::prob::LatentParams;
use crate::rng::NoiseSource;
use crate::{Error, Matrix, Result};

/// Encoder log-variance is clamped to this range before `sigma = exp(logvar / 2)`.
pub const LOGVAR_CLAMP: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, tape: &mut Tape, v: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(v),
            Activation::Tanh => tape.tanh(v),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

/// Stack of affine layers with an activation between them (none after the last).
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<Linear>,
    dims: Vec<usize>,
    activation: Activation,
}

impl Mlp {
    /// Xavier-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn new(store: &mut ParamStore, dims: &[usize], activation: Activation, rng: &mut NoiseSource) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidArgument(alloc::format!("invalid layer widths {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out).map(|_| rng.uniform(-bound, bound)).collect();
                Linear {
                    weight: store.add(Matrix::from_vec(fan_in, fan_out, data).expect("sized")),
                    bias: store.add(Matrix::zeros(1, fan_out)),
                }
            })
            .collect();
        Ok(Self {
            layers,
            dims: dims.to_vec(),
            activation,
        })
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("non-empty")
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let w = tape.param(store, layer.weight);
            let b = tape.param(store, layer.bias);
            let a = tape.matmul(h, w)?;
            h = tape.add_row(a, b)?;
            if i + 1 < self.layers.len() {
                h = self.activation.apply(tape, h);
            }
        }
        Ok(h)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub latent_dim: usize,
    pub activation: Activation,
    pub seed: u64,
}

/// `mu` and `sigma` nodes for a batch, both B x N.
#[derive(Clone, Copy, Debug)]
pub struct EncodedBatch {
    pub mu: Var,
    pub sigma: Var,
}

#[derive(Clone, Debug)]
pub struct Encoder {
    config: EncoderConfig,
    mlp: Mlp,
}

impl Encoder {
    /// Registers freshly initialised weights in `store`; deterministic in `config.seed`.
    pub fn init(config: EncoderConfig, store: &mut ParamStore) -> Result<Self> {
        if config.latent_dim == 0 || config.input_dim == 0 {
            return Err(Error::InvalidArgument("encoder dimensions must be positive".into()));
        }
        let mut dims = Vec::with_capacity(config.hidden_dims.len() + 2);
        dims.push(config.input_dim);
        dims.extend_from_slice(&config.hidden_dims);
        dims.push(2 * config.latent_dim);
        let mut rng = NoiseSource::derived(config.seed, 0xE4C0);
        let mlp = Mlp::new(store, &dims, config.activation, &mut rng)?;
        Ok(Self { config, mlp })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    /// First N outputs are `mu`; the rest are log-variances, clamped and mapped
    /// to `sigma = exp(0.5 * logvar)`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<EncodedBatch> {
        let (_, cols) = tape.shape(x);
        if cols != self.config.input_dim {
            return Err(Error::ShapeMismatch {
                node: x.index(),
                op: "encoder input",
                left: tape.shape(x),
                right: (tape.shape(x).0, self.config.input_dim),
            });
        }
        let n = self.config.latent_dim;
        let raw = self.mlp.forward(tape, store, x)?;
        let mu = tape.slice_cols(raw, 0, n)?;
        let logvar = tape.slice_cols(raw, n, 2 * n)?;
        let lo = tape.max_const(logvar, -LOGVAR_CLAMP);
        let clamped = tape.min_const(lo, LOGVAR_CLAMP);
        let half = tape.scale(clamped, 0.5);
        let sigma = tape.exp(half);
        if !tape.value(raw).is_finite() {
            return Err(Error::NonFinite("encoder activations".into()));
        }
        Ok(EncodedBatch { mu, sigma })
    }

    /// Batch encode without keeping a gradient record. Returns `(mu, sigma)`.
    pub fn encode_matrix(&self, store: &ParamStore, x: &Matrix) -> Result<(Matrix, Matrix)> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let out = self.forward(&mut tape, store, xv)?;
        Ok((tape.value(out.mu).clone(), tape.value(out.sigma).clone()))
    }

    pub fn encode(&self, store: &ParamStore, x: &[f64]) -> Result<LatentParams> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("encoder input".into()));
        }
        let (mu, sigma) = self.encode_matrix(store, &Matrix::row_vector(x))?;
        LatentParams::new(mu.into_vec(), sigma.into_vec())
    }
}
