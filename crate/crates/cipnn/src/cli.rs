//! Command-line interface. Exit codes: 0 success, 1 run failure, 2 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cipnn_core::data::Dataset;
use cipnn_core::encoder::Activation;
use cipnn_core::optim::OptimizerKind;
use cipnn_core::training::{train_autoencoder, train_classify, Setup, TrainConfig, TrainObserver};
use cipnn_core::viz::GridSpec;
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::datasets::{self, data_root};
use crate::export;
use crate::fetch;
use crate::metrics::{write_json, FileObserver, JsonlWriter};
use crate::selftest;
use crate::sweep::{self, EVAL_SEED_OFFSET};

pub const RESOLVED_CONFIG: &str = "resolved_config.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.cipnn";
pub const METRICS_FILE: &str = "metrics.jsonl";

#[derive(Parser, Debug)]
#[command(name = "cipnn", version, about = "Train and inspect continuous-indeterminate-probability networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train the classifier.
    TrainClassify(TrainArgs),
    /// Train an auto-encoder (CIPAE or the VAE baseline).
    TrainAe(AeArgs),
    /// Evaluate a checkpoint's classification accuracy.
    Eval(EvalArgs),
    /// Export scatter tables, heatmaps and reconstructions from a checkpoint.
    Viz(VizArgs),
    /// Train one classifier per regularization factor and compare them.
    SweepGamma(SweepArgs),
    /// Run the built-in oracle and gradient checks.
    Selftest,
}

#[derive(Args, Debug, Clone, Default)]
pub struct TrainArgs {
    /// JSON file with training settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training set: blobs, mnist, fashion-mnist, or an IDX directory.
    #[arg(long, default_value = "mnist")]
    pub dataset: String,
    /// Held-out set evaluated after each epoch (default: the dataset's test split).
    #[arg(long)]
    pub test_dataset: Option<String>,
    /// Use only the first N training samples.
    #[arg(long)]
    pub train_subset: Option<usize>,
    /// Download missing MNIST-family files first.
    #[arg(long)]
    pub fetch: bool,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Record window length T.
    #[arg(long)]
    pub forget: Option<usize>,
    /// Monte Carlo number C.
    #[arg(long)]
    pub monte_carlo: Option<usize>,
    /// Regularization factor in [0, 1].
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Train without the L2 term.
    #[arg(long, conflicts_with = "gamma")]
    pub no_l2: bool,
    /// Stable number added to the posterior ratio.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Encoder hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub activation: Option<ActivationArg>,
    #[arg(long)]
    pub optimizer: Option<OptimizerArg>,
    /// Suppress per-epoch progress on stderr.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Args, Debug, Clone)]
pub struct AeArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Auto-encoder variant (default cipae, or the config file's setup).
    #[arg(long)]
    pub model: Option<AeModel>,
    /// Decoder hidden widths for the VAE baseline, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub decoder_hidden: Option<Vec<usize>>,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "mnist-test")]
    pub dataset: String,
    /// Noise seed (default: the training run's evaluation seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the checkpoint's Monte Carlo number.
    #[arg(long)]
    pub monte_carlo: Option<usize>,
    #[arg(long)]
    pub fetch: bool,
    /// Also write eval.json and the resolved configuration here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct VizArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Samples for the latent scatter table.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long, default_value = "viz")]
    pub out_dir: PathBuf,
    /// Grid points per axis.
    #[arg(long, default_value_t = 50)]
    pub resolution: usize,
    /// Grid bounds `x_min,x_max,y_min,y_max` (default: record means +- 1).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub bounds: Option<Vec<f64>>,
    /// Tiles per row of the per-latent strip.
    #[arg(long, default_value_t = 15)]
    pub strip_steps: usize,
    #[arg(long)]
    pub fetch: bool,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Regularization factors to train, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,0.9,0.6,0.3,0")]
    pub gammas: Vec<f64>,
    /// Add a run without the L2 term.
    #[arg(long)]
    pub with_no_l2: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ActivationArg {
    Relu,
    Tanh,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AeModel {
    Cipae,
    Vae,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(anyhow::Error),
    Run(anyhow::Error),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

fn usage<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Usage(e.into())
}

fn run_err<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Run(e.into())
}

/// Training settings after applying the config file and then the flags.
pub fn resolve_config(args: &TrainArgs, base_setup: Option<Setup>) -> Result<TrainConfig> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str::<TrainConfig>(&text).with_context(|| format!("parsing config {}", p.display()))?
        }
        None => TrainConfig::default(),
    };
    if let Some(s) = base_setup {
        cfg.setup = s;
    }
    macro_rules! set {
        ($field:ident, $flag:expr) => {
            if let Some(v) = $flag.clone() {
                cfg.$field = v;
            }
        };
    }
    set!(forget, args.forget);
    set!(mc_draws, args.monte_carlo);
    set!(eps_stable, args.epsilon);
    set!(learning_rate, args.lr);
    set!(latent_dim, args.latent_dim);
    set!(epochs, args.epochs);
    set!(batch_size, args.batch_size);
    set!(seed, args.seed);
    set!(hidden_dims, args.hidden);
    if let Some(g) = args.gamma {
        cfg.gamma = Some(g);
    }
    if args.no_l2 {
        cfg.gamma = None;
    }
    if let Some(a) = args.activation {
        cfg.activation = match a {
            ActivationArg::Relu => Activation::Relu,
            ActivationArg::Tanh => Activation::Tanh,
        };
    }
    if let Some(o) = args.optimizer {
        cfg.optimizer = match o {
            OptimizerArg::Adam => OptimizerKind::Adam,
            OptimizerArg::Sgd => OptimizerKind::Sgd,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_dataset(name: &str, fetch_missing: bool) -> Result<Dataset> {
    let root = data_root();
    if fetch_missing {
        if let Some((dir, _)) = datasets::idx_dir(name, &root) {
            let family = dir.file_name().and_then(|f| f.to_str()).unwrap_or_default().to_string();
            if fetch::base_url(&family).is_some() && dir.starts_with(&root) {
                for f in fetch::ensure(&family, &root)? {
                    eprintln!("fetched {}", f.display());
                }
            }
        }
    }
    datasets::load(name, &root).with_context(|| format!("loading dataset {name}"))
}

fn prepare_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

#[derive(Serialize)]
struct TrainRecord<'a> {
    command: &'a str,
    config: &'a TrainConfig,
    dataset: &'a str,
    test_dataset: &'a str,
    train_subset: Option<usize>,
    data_root: PathBuf,
}

fn train_command(name: &str, args: &TrainArgs, setup: Setup, decoder_hidden: Option<&[usize]>) -> Result<(), CliError> {
    let mut cfg = resolve_config(args, Some(setup)).map_err(usage)?;
    if let Some(d) = decoder_hidden {
        cfg.decoder_hidden = d.to_vec();
        cfg.validate().map_err(usage)?;
    }
    let test_name = args.test_dataset.clone().unwrap_or_else(|| datasets::test_name(&args.dataset));
    let train = datasets::subset(load_dataset(&args.dataset, args.fetch).map_err(usage)?, args.train_subset);
    let test = load_dataset(&test_name, args.fetch).map_err(usage)?;
    if test.input_dim() != train.input_dim() {
        return Err(usage(anyhow!(
            "test set has {} inputs per sample, training set {}",
            test.input_dim(),
            train.input_dim()
        )));
    }
    prepare_out_dir(&args.out_dir).map_err(run_err)?;
    let record = TrainRecord {
        command: name,
        config: &cfg,
        dataset: &args.dataset,
        test_dataset: &test_name,
        train_subset: args.train_subset,
        data_root: data_root(),
    };
    write_json(&args.out_dir.join(RESOLVED_CONFIG), &record).map_err(run_err)?;
    let writer = JsonlWriter::create(&args.out_dir.join(METRICS_FILE)).map_err(run_err)?;
    let mut obs = FileObserver::new(Some(writer), args.quiet);
    let outcome = match setup {
        Setup::Classify => train_classify(&cfg, &train, Some(&test), &mut obs),
        _ => train_autoencoder(&cfg, &train, Some(&test), &mut obs),
    }
    .map_err(run_err)?;
    if let Some(e) = obs.error.take() {
        return Err(run_err(e));
    }
    let ck = Checkpoint {
        model: outcome.model,
        image_shape: train.image_shape(),
    };
    ck.save(&args.out_dir.join(CHECKPOINT_FILE)).map_err(run_err)?;
    if let Some(d) = outcome.divergence {
        let mut w = JsonlWriter::create(&args.out_dir.join("divergence.jsonl")).map_err(run_err)?;
        w.write(&serde_json::json!({"epoch": d.epoch, "step": d.step, "cause": d.cause})).map_err(run_err)?;
        return Err(run_err(anyhow!(
            "training diverged at epoch {} step {}: {}; checkpoint holds the weights from the start of that epoch",
            d.epoch,
            d.step,
            d.cause
        )));
    }
    match outcome.metrics.last().and_then(|m| m.test_acc) {
        Some(acc) => println!("test accuracy {acc:.4} on {} samples ({test_name})", test.len()),
        None => println!("trained 0 epochs"),
    }
    println!("checkpoint {}", args.out_dir.join(CHECKPOINT_FILE).display());
    Ok(())
}

fn eval_command(args: &EvalArgs) -> Result<(), CliError> {
    let mut ck = Checkpoint::load(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))
        .map_err(usage)?;
    if let Some(c) = args.monte_carlo {
        ck.model.config.mc_draws = c;
        ck.model.config.validate().map_err(usage)?;
    }
    let data = load_dataset(&args.dataset, args.fetch).map_err(usage)?;
    if data.input_dim() != ck.model.input_dim {
        return Err(usage(anyhow!(
            "dataset has {} inputs per sample, checkpoint expects {}",
            data.input_dim(),
            ck.model.input_dim
        )));
    }
    let seed = args.seed.unwrap_or(ck.model.config.seed.wrapping_add(EVAL_SEED_OFFSET));
    let acc = ck.model.evaluate(&data, seed).map_err(run_err)?;
    println!("accuracy {acc:.4} on {} samples ({})", data.len(), args.dataset);
    if let Some(dir) = &args.out_dir {
        prepare_out_dir(dir).map_err(run_err)?;
        let rec = serde_json::json!({
            "command": "eval",
            "checkpoint": args.checkpoint,
            "dataset": args.dataset,
            "seed": seed,
            "config": ck.model.config,
        });
        write_json(&dir.join(RESOLVED_CONFIG), &rec).map_err(run_err)?;
        write_json(&dir.join("eval.json"), &serde_json::json!({"accuracy": acc, "samples": data.len()}))
            .map_err(run_err)?;
    }
    Ok(())
}

fn viz_command(args: &VizArgs) -> Result<(), CliError> {
    let ck = Checkpoint::load(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))
        .map_err(usage)?;
    let n = ck.model.config.latent_dim;
    let grid = match &args.bounds {
        Some(b) => {
            if b.len() != 4 {
                return Err(usage(anyhow!("--bounds takes four values x_min,x_max,y_min,y_max")));
            }
            if n != 2 {
                return Err(usage(anyhow!("--bounds needs a 2-D latent space, checkpoint has {n}")));
            }
            GridSpec::new(vec![(b[0], b[1]), (b[2], b[3])], args.resolution).map_err(usage)?
        }
        None => GridSpec::around(&ck.model.labels, 1.0, args.resolution).map_err(usage)?,
    };
    if args.strip_steps < 2 {
        return Err(usage(anyhow!("--strip-steps must be at least 2")));
    }
    let data = match &args.dataset {
        Some(d) => Some(load_dataset(d, args.fetch).map_err(usage)?),
        None => None,
    };
    prepare_out_dir(&args.out_dir).map_err(run_err)?;
    let rec = serde_json::json!({
        "command": "viz",
        "checkpoint": args.checkpoint,
        "dataset": args.dataset,
        "grid": {"bounds": grid.bounds, "resolution": grid.resolution},
        "strip_steps": args.strip_steps,
        "config": ck.model.config,
    });
    write_json(&args.out_dir.join(RESOLVED_CONFIG), &rec).map_err(run_err)?;
    let files = export::export_figures(&ck.model, data.as_ref(), ck.image_shape, Some(&grid), args.strip_steps, &args.out_dir)
        .map_err(run_err)?;
    for f in files.written {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn sweep_command(args: &SweepArgs) -> Result<(), CliError> {
    let t = &args.train;
    let cfg = resolve_config(t, Some(Setup::Classify)).map_err(usage)?;
    for &g in &args.gammas {
        if !(0.0..=1.0).contains(&g) {
            return Err(usage(anyhow!("gamma {g} is outside [0, 1]")));
        }
    }
    let mut settings: Vec<Option<f64>> = args.gammas.iter().map(|&g| Some(g)).collect();
    if args.with_no_l2 {
        settings.push(None);
    }
    let test_name = t.test_dataset.clone().unwrap_or_else(|| datasets::test_name(&t.dataset));
    let train = datasets::subset(load_dataset(&t.dataset, t.fetch).map_err(usage)?, t.train_subset);
    let test = load_dataset(&test_name, t.fetch).map_err(usage)?;
    prepare_out_dir(&t.out_dir).map_err(run_err)?;
    let rec = serde_json::json!({
        "command": "sweep-gamma",
        "config": cfg,
        "settings": settings,
        "dataset": t.dataset,
        "test_dataset": test_name,
        "train_subset": t.train_subset,
    });
    write_json(&t.out_dir.join(RESOLVED_CONFIG), &rec).map_err(run_err)?;
    let quiet = t.quiet;
    let rows = sweep::sweep_gamma(&cfg, &settings, &train, &test, &mut |g| -> Box<dyn TrainObserver> {
        if !quiet {
            eprintln!("training {}", sweep::setting_name(g));
        }
        Box::new(FileObserver::new(None, quiet))
    });
    let mut w = JsonlWriter::create(&t.out_dir.join("sweep.jsonl")).map_err(run_err)?;
    for r in &rows {
        w.write(r).map_err(run_err)?;
    }
    let table = sweep::format_table(&rows);
    std::fs::write(t.out_dir.join("sweep.txt"), &table).map_err(run_err)?;
    print!("{table}");
    Ok(())
}

fn selftest_command() -> Result<(), CliError> {
    let results = selftest::run_all();
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    if results.iter().any(|r| !r.passed) {
        return Err(run_err(anyhow!("selftest failed")));
    }
    Ok(())
}

fn ae_setup(args: &AeArgs) -> Result<Setup> {
    if let Some(m) = args.model {
        return Ok(match m {
            AeModel::Cipae => Setup::AutoencodeCipae,
            AeModel::Vae => Setup::AutoencodeVae,
        });
    }
    if let Some(p) = &args.train.config {
        let cfg = resolve_config(&TrainArgs { config: Some(p.clone()), ..TrainArgs::default() }, None)?;
        if cfg.setup != Setup::Classify {
            return Ok(cfg.setup);
        }
    }
    Ok(Setup::AutoencodeCipae)
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::TrainClassify(a) => train_command("train-classify", a, Setup::Classify, None),
        Command::TrainAe(a) => {
            let setup = ae_setup(a).map_err(usage)?;
            train_command("train-ae", &a.train, setup, a.decoder_hidden.as_deref())
        }
        Command::Eval(a) => eval_command(a),
        Command::Viz(a) => viz_command(a),
        Command::SweepGamma(a) => sweep_command(a),
        Command::Selftest => selftest_command(),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            let (CliError::Usage(err) | CliError::Run(err)) = &e;
            eprintln!("error: {err:#}");
            e.code()
        }
    }
}

