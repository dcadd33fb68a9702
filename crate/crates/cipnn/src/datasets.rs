//! Dataset names and where their files live.
//!
//! Named datasets resolve under a root directory taken from
//! `CIPNN_DATA_ROOT` (default `data`):
//!
//! | name | files |
//! |------|-------|
//! | `mnist`, `mnist-test` | `<root>/mnist/{train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz]` |
//! | `fashion-mnist`, `fashion-mnist-test` | same names under `<root>/fashion-mnist/` |
//! | `blobs`, `blobs-test` | generated, 3 classes, 200 / 100 samples per class |
//!
//! Any other value is treated as a directory holding the four IDX files.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Result};
use cipnn_core::data::{make_blobs, Dataset};

use crate::idx;

pub const DATA_ROOT_ENV: &str = "CIPNN_DATA_ROOT";

pub const BLOB_CLASSES: usize = 3;
pub const BLOB_SPREAD: f64 = 0.3;

pub fn data_root() -> PathBuf {
    std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

/// Finds `<prefix>-<kind>-ubyte`, preferring the uncompressed file.
fn locate(dir: &Path, split: Split, kind: &str) -> Result<PathBuf> {
    let base = dir.join(format!("{}-{kind}-ubyte", split.prefix()));
    let gz = PathBuf::from(format!("{}.gz", base.display()));
    for p in [base.clone(), gz] {
        if p.is_file() {
            return Ok(p);
        }
    }
    bail!("dataset file {} not found (set {DATA_ROOT_ENV} or run the fetch helper)", base.display())
}

pub fn load_idx_dir(dir: &Path, split: Split, classes: usize) -> Result<Dataset> {
    let images = locate(dir, split, "images-idx3")?;
    let labels = locate(dir, split, "labels-idx1")?;
    Ok(idx::load_pair(&images, &labels, classes)?)
}

/// Directory a named IDX dataset lives in, or `None` for generated ones.
pub fn idx_dir(name: &str, root: &Path) -> Option<(PathBuf, Split)> {
    let (family, split) = match name.strip_suffix("-test") {
        Some(f) => (f, Split::Test),
        None => (name, Split::Train),
    };
    match family {
        "mnist" | "fashion-mnist" => Some((root.join(family), split)),
        "blobs" => None,
        _ => Some((PathBuf::from(family), split)),
    }
}

pub fn load(name: &str, root: &Path) -> Result<Dataset> {
    match name {
        "blobs" => Ok(make_blobs(200, BLOB_CLASSES, 2, BLOB_SPREAD, 1)?),
        "blobs-test" => Ok(make_blobs(100, BLOB_CLASSES, 2, BLOB_SPREAD, 2)?),
        _ => {
            let (dir, split) = idx_dir(name, root).ok_or_else(|| anyhow!("unknown dataset {name}"))?;
            load_idx_dir(&dir, split, 10)
        }
    }
}

/// The held-out counterpart of a training dataset name.
pub fn test_name(train: &str) -> String {
    if train.ends_with("-test") {
        train.to_string()
    } else {
        format!("{train}-test")
    }
}

/// First `n` samples, or all of them when `n` is `None` or too large.
pub fn subset(ds: Dataset, n: Option<usize>) -> Dataset {
    match n {
        Some(n) if n < ds.len() => ds.take(n),
        _ => ds,
    }
}
