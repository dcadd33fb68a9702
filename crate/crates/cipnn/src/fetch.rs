//! Downloads the official IDX archives with `curl` when they are missing.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::Command;

use anyhow::{bail, Context, Result};
use flate2::read::GzDecoder;

/// File stem and its decompressed length in bytes.
pub const IDX_FILES: [(&str, u64); 4] = [
    ("train-images-idx3-ubyte", 16 + 60_000 * 784),
    ("train-labels-idx1-ubyte", 8 + 60_000),
    ("t10k-images-idx3-ubyte", 16 + 10_000 * 784),
    ("t10k-labels-idx1-ubyte", 8 + 10_000),
];

pub fn base_url(family: &str) -> Option<&'static str> {
    match family {
        "mnist" => Some("https://ossci-datasets.s3.amazonaws.com/mnist"),
        "fashion-mnist" => Some("http://fashion-mnist.s3-website.eu-central-1.amazonaws.com"),
        _ => None,
    }
}

/// Makes sure `<root>/<family>` holds all four files, downloading and
/// decompressing whatever is missing. Returns the files that were fetched.
pub fn ensure(family: &str, root: &Path) -> Result<Vec<PathBuf>> {
    let Some(url) = base_url(family) else {
        bail!("no download location known for {family}");
    };
    let dir = root.join(family);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut fetched = Vec::new();
    for (stem, len) in IDX_FILES {
        let dest = dir.join(stem);
        if dest.is_file() && std::fs::metadata(&dest)?.len() == len {
            continue;
        }
        let gz = dir.join(format!("{stem}.gz.part"));
        let status = Command::new("curl")
            .args(["-fsSL", "--retry", "3", "-o"])
            .arg(&gz)
            .arg(format!("{url}/{stem}.gz"))
            .status()
            .context("running curl")?;
        if !status.success() {
            bail!("curl failed for {url}/{stem}.gz ({status})");
        }
        let mut raw = Vec::new();
        GzDecoder::new(std::fs::File::open(&gz)?)
            .read_to_end(&mut raw)
            .with_context(|| format!("decompressing {}", gz.display()))?;
        std::fs::remove_file(&gz)?;
        verify_len(stem, raw.len() as u64, len)?;
        std::fs::write(&dest, raw)?;
        fetched.push(dest);
    }
    Ok(fetched)
}

pub fn verify_len(name: &str, found: u64, expected: u64) -> Result<()> {
    if found != expected {
        bail!("{name}: expected {expected} bytes, got {found}");
    }
    Ok(())
}
