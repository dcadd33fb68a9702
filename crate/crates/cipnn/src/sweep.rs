//! Regularization-factor sweep: one classifier per setting, shared seed.

use cipnn_core::data::Dataset;
use cipnn_core::training::{train_classify, Setup, TrainConfig, TrainObserver};
use cipnn_core::Matrix;
use serde::{Deserialize, Serialize};

/// Seed offset used for held-out evaluation, matching the training loop.
pub const EVAL_SEED_OFFSET: u64 = 0x5EED;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// `gamma=<value>` or `no-l2`.
    pub setting: String,
    pub gamma: Option<f64>,
    pub accuracy: Option<f64>,
    /// Per-axis `(min, max)` of the test-set latent means.
    pub extent: Option<Vec<(f64, f64)>>,
    /// `ok`, or why the run produced no usable model.
    pub status: String,
}

pub fn setting_name(gamma: Option<f64>) -> String {
    match gamma {
        Some(g) => format!("gamma={g}"),
        None => "no-l2".into(),
    }
}

pub fn bounding_box(mu: &Matrix) -> Vec<(f64, f64)> {
    (0..mu.cols())
        .map(|c| {
            (0..mu.rows()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                let v = mu.get(r, c);
                (lo.min(v), hi.max(v))
            })
        })
        .collect()
}

fn run_one(config: &TrainConfig, train: &Dataset, test: &Dataset, obs: &mut dyn TrainObserver) -> anyhow::Result<SweepRow> {
    config.validate()?;
    let out = train_classify(config, train, None, obs)?;
    let mut row = SweepRow {
        setting: setting_name(config.gamma),
        gamma: config.gamma,
        accuracy: None,
        extent: None,
        status: "ok".into(),
    };
    if let Some(d) = out.divergence {
        row.status = format!("diverged at epoch {} step {}: {}", d.epoch, d.step, d.cause);
        return Ok(row);
    }
    row.accuracy = Some(out.model.evaluate(test, config.seed.wrapping_add(EVAL_SEED_OFFSET))?);
    let (mu, _) = out.model.encode(test.inputs())?;
    row.extent = Some(bounding_box(&mu));
    Ok(row)
}

/// Trains one model per entry of `settings` (`None` disables L2). A failing
/// run is recorded in its row and the sweep moves on.
pub fn sweep_gamma(
    base: &TrainConfig,
    settings: &[Option<f64>],
    train: &Dataset,
    test: &Dataset,
    make_observer: &mut dyn FnMut(Option<f64>) -> Box<dyn TrainObserver>,
) -> Vec<SweepRow> {
    settings
        .iter()
        .map(|&gamma| {
            let config = TrainConfig {
                gamma,
                setup: Setup::Classify,
                ..base.clone()
            };
            let mut obs = make_observer(gamma);
            run_one(&config, train, test, obs.as_mut()).unwrap_or_else(|e| SweepRow {
                setting: setting_name(gamma),
                gamma,
                accuracy: None,
                extent: None,
                status: format!("failed: {e:#}"),
            })
        })
        .collect()
}

pub fn format_table(rows: &[SweepRow]) -> String {
    let mut out = format!("{:<12} {:>9}  {:<40} {}\n", "setting", "accuracy", "latent extent", "status");
    for r in rows {
        let acc = r.accuracy.map(|a| format!("{a:.4}")).unwrap_or_else(|| "-".into());
        let ext = r
            .extent
            .as_ref()
            .map(|e| e.iter().map(|(lo, hi)| format!("[{lo:.2},{hi:.2}]")).collect::<Vec<_>>().join("x"))
            .unwrap_or_else(|| "-".into());
        out.push_str(&format!("{:<12} {:>9}  {:<40} {}\n", r.setting, acc, ext, r.status));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use cipnn_core::data::make_blobs;
    use cipnn_core::training::Silent;

    fn small() -> (TrainConfig, Dataset, Dataset) {
        let cfg = TrainConfig {
            latent_dim: 1,
            forget: 128,
            epochs: 2,
            hidden_dims: vec![16],
            ..TrainConfig::default()
        };
        (cfg, make_blobs(30, 3, 2, 0.3, 1).unwrap(), make_blobs(10, 3, 2, 0.3, 2).unwrap())
    }

    #[test]
    fn failing_setting_does_not_stop_the_sweep() {
        let (cfg, train, test) = small();
        let rows = sweep_gamma(&cfg, &[Some(1.5), Some(0.9), None], &train, &test, &mut |_| Box::new(Silent));
        assert_eq!(rows.len(), 3);
        assert!(rows[0].status.starts_with("failed"), "{}", rows[0].status);
        assert_eq!(rows[1].status, "ok");
        assert!(rows[1].accuracy.is_some());
        assert_eq!(rows[2].setting, "no-l2");
        let table = format_table(&rows);
        assert_eq!(table.lines().count(), 4);
    }

    #[test]
    fn repeated_sweep_is_identical() {
        let (cfg, train, test) = small();
        let a = sweep_gamma(&cfg, &[Some(0.6)], &train, &test, &mut |_| Box::new(Silent));
        let b = sweep_gamma(&cfg, &[Some(0.6)], &train, &test, &mut |_| Box::new(Silent));
        assert_eq!(format_table(&a), format_table(&b));
        assert_eq!(a.len(), 1);
    }

    #[test]
    fn box_per_axis() {
        let m = Matrix::from_rows(&[[1.0, -2.0], [3.0, 0.5]]).unwrap();
        assert_eq!(bounding_box(&m), vec![(1.0, 3.0), (-2.0, 0.5)]);
    }
}
