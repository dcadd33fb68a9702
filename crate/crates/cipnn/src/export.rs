//! Latent scatter tables and figure files.

use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use cipnn_core::data::Dataset;
use cipnn_core::training::TrainedModel;
use cipnn_core::viz::{self, GridSpec};
use cipnn_core::Matrix;

use crate::pgm;

/// Writes `mu_1..mu_N, sigma_1..sigma_N, label` for every sample. Values
/// use the shortest representation that parses back to the same `f64`.
pub fn export_latent_scatter(model: &TrainedModel, data: &Dataset, path: &Path) -> Result<()> {
    let (mu, sigma) = model.encode(data.inputs())?;
    write_scatter(&mu, &sigma, data.labels(), path)
}

pub fn write_scatter(mu: &Matrix, sigma: &Matrix, labels: &[usize], path: &Path) -> Result<()> {
    let n = mu.cols();
    let mut out = String::new();
    let header: Vec<String> = (1..=n)
        .map(|i| format!("mu_{i}"))
        .chain((1..=n).map(|i| format!("sigma_{i}")))
        .chain(["label".to_string()])
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for (r, label) in labels.iter().enumerate() {
        for v in mu.row(r).iter().chain(sigma.row(r)) {
            out.push_str(&format!("{v:?},"));
        }
        out.push_str(&format!("{label}\n"));
    }
    let mut f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Parses a table written by [`write_scatter`] back into `(mu, sigma, labels)`.
pub fn read_scatter(path: &Path) -> Result<(Matrix, Matrix, Vec<usize>)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().context("empty scatter table")?;
    let cols = header.split(',').count();
    if cols < 3 || cols % 2 == 0 {
        bail!("scatter header has {cols} columns");
    }
    let n = (cols - 1) / 2;
    let (mut mu, mut sigma, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            bail!("row {} has {} columns, expected {cols}", i + 1, fields.len());
        }
        for (j, f) in fields[..2 * n].iter().enumerate() {
            let v: f64 = f.parse().with_context(|| format!("row {} column {}", i + 1, j + 1))?;
            if j < n { &mut mu } else { &mut sigma }.push(v);
        }
        labels.push(fields[2 * n].parse()?);
    }
    let rows = labels.len();
    Ok((Matrix::from_vec(rows, n, mu)?, Matrix::from_vec(rows, n, sigma)?, labels))
}

/// Files written by [`export_figures`].
#[derive(Clone, Debug, Default)]
pub struct FigureFiles {
    pub written: Vec<std::path::PathBuf>,
}

/// Exports every figure the model supports into `dir`: a scatter of `data`,
/// per-class heatmaps and a reconstruction grid for 2-D latents, and a
/// per-latent strip when pixel records are present.
pub fn export_figures(
    model: &TrainedModel,
    data: Option<&Dataset>,
    image_shape: Option<(usize, usize)>,
    grid: Option<&GridSpec>,
    strip_steps: usize,
    dir: &Path,
) -> Result<FigureFiles> {
    let mut files = FigureFiles::default();
    let mut push = |name: String| {
        let p = dir.join(name);
        files.written.push(p.clone());
        p
    };
    if let Some(d) = data {
        export_latent_scatter(model, d, &push("scatter.csv".into()))?;
    }
    let n = model.config.latent_dim;
    let default_grid;
    let grid = match grid {
        Some(g) => g,
        None => {
            default_grid = GridSpec::default_for(&model.labels)?;
            &default_grid
        }
    };
    if n == 2 {
        for class in 0..model.classes {
            let img = viz::class_heatmap(&model.labels, grid, class)?;
            pgm::write(&push(format!("heatmap_class_{class}.pgm")), &img)?;
        }
    }
    if let (Some(px), Some(shape)) = (&model.pixels, image_shape) {
        if n == 2 {
            let img = viz::reconstruction_grid(px, grid, shape)?;
            pgm::write(&push("reconstruction_grid.pgm".into()), &img)?;
        }
        let (_, mu, _) = px.to_matrices();
        let ranges = viz::strip_ranges(&mu)?;
        let img = viz::per_latent_strip(px, &ranges, strip_steps, shape)?;
        pgm::write(&push("per_latent_strip.pgm".into()), &img)?;
    }
    Ok(files)
}
