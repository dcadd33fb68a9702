use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cipnn::checkpoint::Checkpoint;
use cipnn::export::read_scatter;
use cipnn::idx::{write_idx_images, write_idx_labels, IdxImages};
use cipnn::pgm;

fn cipnn(args: &[&str], data_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cipnn"))
        .args(args)
        .env("CIPNN_DATA_ROOT", data_root)
        .output()
        .expect("spawn cipnn")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn blob_model(dir: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["train-classify", "--dataset", "blobs", "--quiet", "--out-dir", s(dir)];
    args.extend_from_slice(extra);
    let out = cipnn(&args, dir);
    ok(&out);
    dir.join("checkpoint.cipnn")
}

#[test]
fn train_classify_writes_metrics_checkpoint_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = cipnn(
        &["train-classify", "--dataset", "blobs", "--latent-dim", "1", "--epochs", "30", "--quiet", "--out-dir", s(dir.path())],
        dir.path(),
    );
    ok(&out);
    let metrics = std::fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 30);
    let last: serde_json::Value = serde_json::from_str(metrics.lines().last().unwrap()).unwrap();
    assert!(last["test_acc"].as_f64().unwrap() >= 0.98, "{last}");
    let resolved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("resolved_config.json")).unwrap()).unwrap();
    assert_eq!(resolved["config"]["latent_dim"], 1);
    assert_eq!(resolved["config"]["epochs"], 30);
    assert_eq!(resolved["config"]["setup"], "classify");

    let ck = dir.path().join("checkpoint.cipnn");
    let eval = cipnn(&["eval", "--checkpoint", s(&ck), "--dataset", "blobs-test"], dir.path());
    ok(&eval);
    let line = String::from_utf8(eval.stdout).unwrap();
    assert!(line.starts_with("accuracy "), "{line}");
    let acc: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
    let printed = last["test_acc"].as_f64().unwrap();
    assert!((acc - printed).abs() < 5e-5, "eval {acc} vs training {printed}");
}

#[test]
fn invalid_values_and_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = cipnn(&["train-classify", "--gamma", "1.5", "--out-dir", s(dir.path())], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim().lines().count(), 1, "{err}");
    assert!(err.contains("gamma") || err.contains("[0, 1]"), "{err}");
    assert!(!dir.path().join("metrics.jsonl").exists());

    let out = cipnn(&["train-classify", "--no-such-flag"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = cipnn(&["train-classify", "--dataset", "mnist", "--out-dir", s(dir.path())], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));
    let out = cipnn(&["eval", "--checkpoint", s(&dir.path().join("missing"))], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = cipnn(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"epochs": 1, "latent_dim": 2, "forget": 600, "hidden_dims": [16]}"#).unwrap();
    let out = cipnn(
        &["train-classify", "--config", s(&cfg), "--dataset", "blobs", "--epochs", "2", "--quiet", "--out-dir", s(dir.path())],
        dir.path(),
    );
    ok(&out);
    let resolved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("resolved_config.json")).unwrap()).unwrap();
    assert_eq!(resolved["config"]["epochs"], 2);
    assert_eq!(resolved["config"]["latent_dim"], 2);
    assert_eq!(resolved["config"]["forget"], 600);
    assert_eq!(std::fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap().lines().count(), 2);

    std::fs::write(&cfg, r#"{"epochs": 1, "learning_rat": 0.1}"#).unwrap();
    let out = cipnn(&["train-classify", "--config", s(&cfg), "--dataset", "blobs"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = cipnn(&["selftest"], dir.path());
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 2, "{text}");
}

#[test]
fn sweep_of_one_gamma_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = cipnn(
        &[
            "sweep-gamma", "--gammas", "0.9", "--dataset", "blobs", "--epochs", "2", "--hidden", "16", "--latent-dim", "1",
            "--quiet", "--out-dir", s(dir.path()),
        ],
        dir.path(),
    );
    ok(&out);
    let rows = std::fs::read_to_string(dir.path().join("sweep.jsonl")).unwrap();
    assert_eq!(rows.lines().count(), 1);
    let row: serde_json::Value = serde_json::from_str(rows.lines().next().unwrap()).unwrap();
    assert_eq!(row["setting"], "gamma=0.9");
    assert_eq!(row["status"], "ok");
    assert!(dir.path().join("resolved_config.json").exists());
}

#[test]
fn blob_scatter_separates_classes() {
    let dir = tempfile::tempdir().unwrap();
    // the mean penalty (1 - gamma) mu caps how far apart the classes drift;
    // at gamma = 0.9 they settle near 5.3 sigma, so use a weaker pull
    let ck = blob_model(dir.path(), &["--latent-dim", "2", "--epochs", "30", "--gamma", "0.98"]);
    let viz = dir.path().join("viz");
    let out = cipnn(&["viz", "--checkpoint", s(&ck), "--dataset", "blobs-test", "--resolution", "20", "--out-dir", s(&viz)], dir.path());
    ok(&out);
    let (mu, sigma, labels) = read_scatter(&viz.join("scatter.csv")).unwrap();
    assert_eq!(labels.len(), 300);
    let mut centroids = [[0.0f64; 2]; 3];
    let mut counts = [0usize; 3];
    for (r, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (i, c) in centroids[l].iter_mut().enumerate() {
            *c += mu.get(r, i);
        }
    }
    for l in 0..3 {
        for v in centroids[l].iter_mut() {
            *v /= counts[l] as f64;
        }
    }
    let mean_sigma = sigma.data().iter().sum::<f64>() / sigma.len() as f64;
    for a in 0..3 {
        for b in a + 1..3 {
            let d = ((centroids[a][0] - centroids[b][0]).powi(2) + (centroids[a][1] - centroids[b][1]).powi(2)).sqrt();
            assert!(d > 6.0 * mean_sigma, "classes {a},{b}: distance {d} vs mean sigma {mean_sigma}");
        }
    }
    for class in 0..3 {
        let img = pgm::read(&viz.join(format!("heatmap_class_{class}.pgm"))).unwrap();
        assert_eq!((img.width, img.height), (20, 20));
    }
}

#[test]
fn viz_exports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let ck = blob_model(dir.path(), &["--latent-dim", "2", "--epochs", "3", "--hidden", "64,32"]);
    let run = |sub: &str| {
        let d = dir.path().join(sub);
        ok(&cipnn(&["viz", "--checkpoint", s(&ck), "--resolution", "16", "--bounds", "-3,3,-3,3", "--out-dir", s(&d)], dir.path()));
        d
    };
    let (a, b) = (run("a"), run("b"));
    for class in 0..3 {
        let f = format!("heatmap_class_{class}.pgm");
        assert_eq!(std::fs::read(a.join(&f)).unwrap(), std::fs::read(b.join(&f)).unwrap());
    }
    let resolved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("resolved_config.json")).unwrap()).unwrap();
    assert_eq!(resolved["grid"]["bounds"][0][0], -3.0);
}

fn write_image_dataset(dir: &Path, count: usize) {
    std::fs::create_dir_all(dir).unwrap();
    // two kinds of 4x4 image: left half lit or right half lit
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for i in 0..count {
        let class = i % 2;
        for _r in 0..4 {
            for c in 0..4 {
                let lit = (c < 2) == (class == 0);
                pixels.push(if lit { 230 - (i % 7) as u8 } else { (i % 5) as u8 });
            }
        }
        labels.push(class as u8);
    }
    for split in ["train", "t10k"] {
        let imgs = IdxImages {
            count,
            rows: 4,
            cols: 4,
            pixels: pixels.clone(),
        };
        write_idx_images(&dir.join(format!("{split}-images-idx3-ubyte")), &imgs).unwrap();
        write_idx_labels(&dir.join(format!("{split}-labels-idx1-ubyte")), &labels).unwrap();
    }
}

#[test]
fn autoencoders_train_from_idx_directories_and_render() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("tiny");
    write_image_dataset(&data, 96);
    for model in ["cipae", "vae"] {
        let run = dir.path().join(model);
        let out = cipnn(
            &[
                "train-ae", "--model", model, "--dataset", s(&data), "--epochs", "2", "--batch-size", "16", "--forget", "64",
                "--hidden", "16", "--decoder-hidden", "16", "--gamma", "0.98", "--quiet", "--out-dir", s(&run),
            ],
            dir.path(),
        );
        ok(&out);
        let ck = Checkpoint::load(&run.join("checkpoint.cipnn")).unwrap();
        assert_eq!(ck.image_shape, Some((4, 4)));
        let px = ck.model.pixels.as_ref().expect("pixel window");
        assert_eq!((px.len(), px.target_dim()), (64, 16));
        assert_eq!(ck.model.decoder.is_some(), model == "vae");

        let viz = run.join("viz");
        ok(&cipnn(&["viz", "--checkpoint", s(&run.join("checkpoint.cipnn")), "--resolution", "5", "--out-dir", s(&viz)], dir.path()));
        let grid = pgm::read(&viz.join("reconstruction_grid.pgm")).unwrap();
        assert_eq!((grid.width, grid.height), (20, 20));
        let strip = pgm::read(&viz.join("per_latent_strip.pgm")).unwrap();
        assert_eq!((strip.width, strip.height), (15 * 4, 2 * 4));
    }
}

#[test]
fn checkpoint_reload_reproduces_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let ck_path = blob_model(dir.path(), &["--latent-dim", "2", "--epochs", "2", "--hidden", "64,32"]);
    let ck = Checkpoint::load(&ck_path).unwrap();
    let again = dir.path().join("again.cipnn");
    ck.save(&again).unwrap();
    assert_eq!(std::fs::read(&ck_path).unwrap(), std::fs::read(&again).unwrap());
    let test = cipnn::datasets::load("blobs-test", dir.path()).unwrap();
    let reloaded = Checkpoint::load(&again).unwrap();
    assert_eq!(ck.model.evaluate(&test, 3).unwrap(), reloaded.model.evaluate(&test, 3).unwrap());
}
