//! Training loops for the classifier and the two auto-encoder setups, plus
//! test-time evaluation.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tape};
use crate::cipae::{bce_on_tape, reconstruct_on_tape};
use crate::data::{gather_rows, Dataset};
use crate::encoder::{Activation, Encoder, EncoderConfig};
use crate::optim::{Optimizer, OptimizerKind};
use crate::posterior::{conditional_confidence, cross_entropy_on_tape, posterior_on_tape, predict_batch, DEFAULT_EPS_STABLE};
use crate::recorder::{IndexWindow, RecordSet, Recorder, TargetKind};
use crate::regularization::{kl_reg_on_tape, total_loss, RegConfig};
use crate::rng::NoiseSource;
use crate::vae::{vae_loss_on_tape, Decoder, DecoderConfig};
use crate::{Error, Matrix, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setup {
    Classify,
    AutoencodeCipae,
    AutoencodeVae,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub setup: Setup,
    pub latent_dim: usize,
    /// Record window size T.
    pub forget: usize,
    /// Monte Carlo draws C per sample, in training and at evaluation.
    pub mc_draws: usize,
    /// Regularization factor; `None` trains without the regularizer.
    pub gamma: Option<f64>,
    pub eps_stable: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub optimizer: OptimizerKind,
    pub decoder_hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            setup: Setup::Classify,
            latent_dim: 2,
            forget: 3000,
            mc_draws: 2,
            gamma: Some(0.9),
            eps_stable: DEFAULT_EPS_STABLE,
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 20,
            seed: 0,
            hidden_dims: alloc::vec![512, 256],
            activation: Activation::Relu,
            optimizer: OptimizerKind::Adam,
            decoder_hidden: alloc::vec![256, 512],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.latent_dim == 0 {
            return bad("latent dimension must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if self.forget < self.batch_size {
            return bad(alloc::format!(
                "forget number {} must be at least the batch size {}",
                self.forget, self.batch_size
            ));
        }
        if self.mc_draws < 1 {
            return bad("Monte Carlo number must be >= 1".into());
        }
        if let Some(g) = self.gamma {
            RegConfig::new(g)?;
        }
        if !(self.eps_stable >= 0.0 && self.eps_stable.is_finite()) {
            return bad(alloc::format!("stable number must be finite and >= 0, got {}", self.eps_stable));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(alloc::format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.hidden_dims.contains(&0) || self.decoder_hidden.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        Ok(())
    }

    fn reg(&self) -> Option<RegConfig> {
        self.gamma.map(|g| RegConfig::new(g).expect("validated"))
    }

    pub fn encoder_config(&self, input_dim: usize) -> EncoderConfig {
        EncoderConfig {
            input_dim,
            hidden_dims: self.hidden_dims.clone(),
            latent_dim: self.latent_dim,
            activation: self.activation,
            seed: self.seed,
        }
    }

    pub fn decoder_config(&self, output_dim: usize) -> DecoderConfig {
        DecoderConfig {
            latent_dim: self.latent_dim,
            hidden_dims: self.decoder_hidden.clone(),
            output_dim,
            seed: self.seed,
        }
    }
}

/// Per-epoch summary. Losses are sample-weighted means over the epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub l1: f64,
    pub l2: f64,
    pub test_acc: Option<f64>,
    pub seconds: f64,
}

/// Hooks into the training loop. `now` supplies wall time in seconds, since
/// the core has no clock of its own.
pub trait TrainObserver {
    fn now(&mut self) -> f64 {
        0.0
    }
    fn on_step(&mut self, _step: u64, _l1: f64, _l2: f64) {}
    fn on_epoch(&mut self, _metrics: &EpochMetrics) {}
}

pub struct Silent;

impl TrainObserver for Silent {}

/// Weights plus the record windows needed to use them.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub config: TrainConfig,
    pub input_dim: usize,
    pub classes: usize,
    pub store: ParamStore,
    pub encoder: Encoder,
    pub decoder: Option<Decoder>,
    /// One-hot class window: the classification head.
    pub labels: RecordSet,
    /// Pixel window with the same statistics, when inputs are images.
    pub pixels: Option<RecordSet>,
}

impl TrainedModel {
    /// Reassembles a model from stored parts, checking the weights fit the
    /// architecture described by `config`.
    pub fn rebuild(
        config: TrainConfig,
        input_dim: usize,
        classes: usize,
        store: ParamStore,
        labels: RecordSet,
        pixels: Option<RecordSet>,
    ) -> Result<Self> {
        config.validate()?;
        let mut scratch = ParamStore::new();
        let encoder = Encoder::init(config.encoder_config(input_dim), &mut scratch)?;
        let decoder = match config.setup {
            Setup::AutoencodeVae => Some(Decoder::init(config.decoder_config(input_dim), &mut scratch)?),
            _ => None,
        };
        if scratch.len() != store.len() {
            return Err(Error::LengthMismatch {
                what: "parameter count",
                expected: scratch.len(),
                found: store.len(),
            });
        }
        for (a, b) in scratch.iter().zip(store.iter()) {
            if a.value().shape() != b.value().shape() {
                return Err(Error::InvalidArgument(alloc::format!(
                    "parameter shape {:?} does not match architecture {:?}",
                    b.value().shape(),
                    a.value().shape()
                )));
            }
        }
        if !store.all_finite() {
            return Err(Error::NonFinite("stored weights".into()));
        }
        if labels.latent_dim() != config.latent_dim || labels.target_dim() != classes {
            return Err(Error::InvalidArgument("label window does not match the model".into()));
        }
        if let Some(p) = &pixels {
            if p.latent_dim() != config.latent_dim || p.target_dim() != input_dim {
                return Err(Error::InvalidArgument("pixel window does not match the model".into()));
            }
        }
        Ok(Self {
            config,
            input_dim,
            classes,
            store,
            encoder,
            decoder,
            labels,
            pixels,
        })
    }

    pub fn evaluate(&self, test: &Dataset, seed: u64) -> Result<f64> {
        evaluate(&self.encoder, &self.store, &self.labels, test, self.config.mc_draws, self.config.eps_stable, seed)
    }

    pub fn encode(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        encode_chunked(&self.encoder, &self.store, x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Divergence {
    pub epoch: usize,
    pub step: u64,
    pub cause: String,
}

/// Result of a run. On divergence `model` holds the weights from the start
/// of the failing epoch and `divergence` says where it happened.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub metrics: Vec<EpochMetrics>,
    pub divergence: Option<Divergence>,
}

const EVAL_CHUNK: usize = 512;

pub(crate) fn encode_chunked(encoder: &Encoder, store: &ParamStore, x: &Matrix) -> Result<(Matrix, Matrix)> {
    let n = encoder.latent_dim();
    let mut mu = Matrix::zeros(x.rows(), n);
    let mut sigma = Matrix::zeros(x.rows(), n);
    for start in (0..x.rows()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(x.rows());
        let (m, s) = encoder.encode_matrix(store, &x.slice_rows(start, end))?;
        for r in 0..end - start {
            mu.row_mut(start + r).copy_from_slice(m.row(r));
            sigma.row_mut(start + r).copy_from_slice(s.row(r));
        }
    }
    Ok((mu, sigma))
}

/// Fraction of `test` whose most probable class is its label. Sample `i`
/// uses noise derived from `(seed, i)`, so results do not depend on chunking.
pub fn evaluate(
    encoder: &Encoder,
    store: &ParamStore,
    records: &RecordSet,
    test: &Dataset,
    draws: usize,
    eps_stable: f64,
    seed: u64,
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let mut correct = 0usize;
    for start in (0..test.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(test.len());
        let x = test.inputs().slice_rows(start, end);
        let p = predict_batch(encoder, store, &x, records, draws, eps_stable, seed, start as u64)?;
        correct += (0..end - start)
            .filter(|&r| crate::posterior::argmax(p.row(r)) == test.labels()[start + r])
            .count();
    }
    Ok(correct as f64 / test.len() as f64)
}

/// Fraction of samples whose mean latent is dominated (`max_l H_l / G >=
/// threshold`) by a single class of the window.
pub fn confident_fraction(model: &TrainedModel, data: &Dataset, threshold: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let (mu, _) = model.encode(data.inputs())?;
    let mut hits = 0usize;
    for r in 0..mu.rows() {
        if conditional_confidence(mu.row(r), &model.labels)? >= threshold {
            hits += 1;
        }
    }
    Ok(hits as f64 / mu.rows() as f64)
}

fn check_images(ds: &Dataset) -> Result<()> {
    if let Some(&p) = ds.inputs().data().iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidArgument(alloc::format!(
            "auto-encoding needs pixel inputs in [0, 1], found {p}"
        )));
    }
    Ok(())
}

struct Heads {
    labels: RecordSet,
    pixels: Option<RecordSet>,
}

/// Re-encodes the samples of the final window with the current weights.
fn frozen_heads(encoder: &Encoder, store: &ParamStore, train: &Dataset, window: &[usize], with_pixels: bool) -> Result<Heads> {
    if window.is_empty() {
        return Err(Error::Empty("training window"));
    }
    let x = gather_rows(train.inputs(), window);
    let (mu, sigma) = encode_chunked(encoder, store, &x)?;
    let labels = RecordSet::from_matrices(train.batch_one_hot(window), mu.clone(), sigma.clone(), TargetKind::OneHot)?;
    let pixels = if with_pixels {
        Some(RecordSet::from_matrices(x, mu, sigma, TargetKind::Soft)?)
    } else {
        None
    };
    Ok(Heads { labels, pixels })
}

fn recorded_heads(recorder: &Recorder, train: &Dataset, window: &[usize], with_pixels: bool) -> Result<Heads> {
    let labels = recorder.snapshot()?;
    let pixels = if with_pixels {
        Some(labels.with_targets(gather_rows(train.inputs(), window), TargetKind::Soft)?)
    } else {
        None
    };
    Ok(Heads { labels, pixels })
}

/// Supervised classifier.
pub fn train_classify(config: &TrainConfig, train: &Dataset, test: Option<&Dataset>, obs: &mut dyn TrainObserver) -> Result<TrainOutcome> {
    if config.setup != Setup::Classify {
        return Err(Error::InvalidArgument("train_classify needs setup = classify".into()));
    }
    run(config, train, test, obs)
}

/// Auto-encoder (probabilistic or VAE baseline), scored by a classification
/// head built from frozen latents of the final window.
pub fn train_autoencoder(config: &TrainConfig, train: &Dataset, test: Option<&Dataset>, obs: &mut dyn TrainObserver) -> Result<TrainOutcome> {
    if config.setup == Setup::Classify {
        return Err(Error::InvalidArgument("train_autoencoder needs an auto-encoder setup".into()));
    }
    check_images(train)?;
    run(config, train, test, obs)
}

fn run(config: &TrainConfig, train: &Dataset, test: Option<&Dataset>, obs: &mut dyn TrainObserver) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if let Some(t) = test {
        if t.input_dim() != train.input_dim() {
            return Err(Error::LengthMismatch {
                what: "test input dimension",
                expected: train.input_dim(),
                found: t.input_dim(),
            });
        }
    }
    let (j, m, n) = (train.input_dim(), train.classes(), config.latent_dim);
    let mut store = ParamStore::new();
    let encoder = Encoder::init(config.encoder_config(j), &mut store)?;
    let decoder = match config.setup {
        Setup::AutoencodeVae => Some(Decoder::init(config.decoder_config(j), &mut store)?),
        _ => None,
    };
    let reg = config.reg();
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate);
    let mut labels = Recorder::new(config.forget, m, n, TargetKind::OneHot)?;
    let mut pixels = match config.setup {
        Setup::AutoencodeCipae => Some(Recorder::new(config.forget, j, n, TargetKind::Soft)?),
        _ => None,
    };
    let mut window = IndexWindow::new(config.forget);
    let with_pixels = config.setup != Setup::Classify || train.image_shape().is_some();

    let mut shuffle_rng = NoiseSource::derived(config.seed, 1);
    let mut noise_rng = NoiseSource::derived(config.seed, 2);
    let eval_seed = config.seed.wrapping_add(0x5EED);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut metrics = Vec::with_capacity(config.epochs);
    let mut step = 0u64;
    let mut divergence = None;
    let mut last_good = store.clone();
    let mut heads: Option<Heads> = None;

    'epochs: for epoch in 1..=config.epochs {
        let started = obs.now();
        last_good.clone_from(&store);
        shuffle_rng.shuffle(&mut order);
        let (mut l1_sum, mut l2_sum) = (0.0, 0.0);
        for batch in order.chunks(config.batch_size) {
            let b = batch.len();
            let x = train.batch_inputs(batch);
            let noise: Vec<Matrix> = (0..config.mc_draws).map(|_| noise_rng.normal_matrix(1, n)).collect();
            let mut tape = Tape::new();
            let attempt = match config.setup {
                Setup::AutoencodeVae => {
                    batch.iter().for_each(|&i| window.push(i));
                    vae_loss_on_tape(&mut tape, &encoder, decoder.as_ref().expect("vae decoder"), &store, &x, reg, &noise)
                }
                _ => (|| {
                    let xv = tape.constant(x.clone());
                    let enc = encoder.forward(&mut tape, &store, xv)?;
                    let (mu, sigma) = (tape.value(enc.mu).clone(), tape.value(enc.sigma).clone());
                    let one_hot = train.batch_one_hot(batch);
                    labels.push_batch(&one_hot, &mu, &sigma)?;
                    batch.iter().for_each(|&i| window.push(i));
                    let l1 = match pixels.as_mut() {
                        None => {
                            let p = posterior_on_tape(&mut tape, enc.mu, enc.sigma, &labels.view()?, &noise, config.eps_stable, None)?;
                            cross_entropy_on_tape(&mut tape, p, &one_hot)?
                        }
                        Some(px) => {
                            px.push_batch(&x, &mu, &sigma)?;
                            let r = reconstruct_on_tape(&mut tape, enc.mu, enc.sigma, &px.view()?, &noise, config.eps_stable, None)?;
                            bce_on_tape(&mut tape, r, &x)?
                        }
                    };
                    let l2 = match reg {
                        Some(reg) => kl_reg_on_tape(&mut tape, enc.mu, enc.sigma, reg)?,
                        None => tape.constant(Matrix::scalar(0.0)),
                    };
                    let total = tape.add(l1, l2)?;
                    Ok((total, l1, l2))
                })(),
            };
            let (total, l1, l2) = match attempt {
                Ok(v) => v,
                Err(Error::NonFinite(what)) => {
                    divergence = Some(Divergence {
                        epoch,
                        step,
                        cause: alloc::format!("non-finite {what}"),
                    });
                    store.clone_from(&last_good);
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            let (v1, v2) = (tape.value(l1).item(), tape.value(l2).item());
            if let Err(e) = total_loss(v1, v2) {
                let at = tape
                    .first_non_finite()
                    .map(|(i, op)| alloc::format!(" (first at node {i}, {op})"))
                    .unwrap_or_default();
                divergence = Some(Divergence {
                    epoch,
                    step,
                    cause: alloc::format!("{e}{at}"),
                });
                store.clone_from(&last_good);
                break 'epochs;
            }
            tape.backward(total, &mut store)?;
            if !store.all_finite() {
                divergence = Some(Divergence {
                    epoch,
                    step,
                    cause: "non-finite gradient".into(),
                });
                store.clone_from(&last_good);
                break 'epochs;
            }
            optimizer.step(&mut store);
            step += 1;
            l1_sum += v1 * b as f64;
            l2_sum += v2 * b as f64;
            obs.on_step(step, v1, v2);
        }
        let h = build_heads(config, &encoder, &store, &labels, train, &window.to_vec(), with_pixels)?;
        let test_acc = match test {
            Some(t) => Some(evaluate(&encoder, &store, &h.labels, t, config.mc_draws, config.eps_stable, eval_seed)?),
            None => None,
        };
        heads = Some(h);
        let em = EpochMetrics {
            epoch,
            l1: l1_sum / train.len() as f64,
            l2: l2_sum / train.len() as f64,
            test_acc,
            seconds: obs.now() - started,
        };
        obs.on_epoch(&em);
        metrics.push(em);
    }

    let heads = match heads {
        Some(h) if divergence.is_none() => h,
        _ => {
            let w = window.to_vec();
            if w.is_empty() {
                return Err(Error::NonFinite(alloc::format!(
                    "training diverged before any record was kept: {}",
                    divergence.map(|d| d.cause).unwrap_or_default()
                )));
            }
            // the recorded window may hold statistics from diverged weights
            frozen_heads(&encoder, &store, train, &w, with_pixels)?
        }
    };
    let model = TrainedModel {
        config: config.clone(),
        input_dim: j,
        classes: m,
        store,
        encoder,
        decoder,
        labels: heads.labels,
        pixels: heads.pixels,
    };
    Ok(TrainOutcome {
        model,
        metrics,
        divergence,
    })
}

fn build_heads(
    config: &TrainConfig,
    encoder: &Encoder,
    store: &ParamStore,
    labels: &Recorder,
    train: &Dataset,
    window: &[usize],
    with_pixels: bool,
) -> Result<Heads> {
    match config.setup {
        Setup::Classify => recorded_heads(labels, train, window, with_pixels),
        _ => frozen_heads(encoder, store, train, window, with_pixels),
    }
}
