//! Deterministic renderings of a trained latent space: class-probability
//! heatmaps, reconstruction grids and per-latent strips. Everything here is
//! evaluated at fixed latent points; nothing is sampled.

use alloc::sync::Arc;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::autodiff::Tape;
use crate::posterior::{log_h_and_g, ratio_on_tape};
use crate::recorder::RecordSet;
use crate::{Error, Matrix, Result};

/// Axis-aligned grid over a latent plane (or a line, for strips).
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub bounds: Vec<(f64, f64)>,
    pub resolution: usize,
}

impl GridSpec {
    pub fn new(bounds: Vec<(f64, f64)>, resolution: usize) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::InvalidArgument("grid resolution must be positive".into()));
        }
        if bounds.is_empty() {
            return Err(Error::Empty("grid bounds"));
        }
        if let Some(&(lo, hi)) = bounds.iter().find(|(lo, hi)| !(lo < hi && lo.is_finite() && hi.is_finite())) {
            return Err(Error::InvalidArgument(alloc::format!("grid bounds need min < max, got [{lo}, {hi}]")));
        }
        Ok(Self { bounds, resolution })
    }

    /// `[min mu - margin, max mu + margin]` on every axis of the records.
    pub fn around(records: &RecordSet, margin: f64, resolution: usize) -> Result<Self> {
        let n = records.latent_dim();
        let mut bounds = alloc::vec![(f64::INFINITY, f64::NEG_INFINITY); n];
        for k in 0..records.len() {
            for (b, &m) in bounds.iter_mut().zip(records.mu(k)) {
                b.0 = b.0.min(m);
                b.1 = b.1.max(m);
            }
        }
        Self::new(bounds.into_iter().map(|(lo, hi)| (lo - margin, hi + margin)).collect(), resolution)
    }

    /// Default plane grid: one unit beyond the recorded means, 50 points per axis.
    pub fn default_for(records: &RecordSet) -> Result<Self> {
        Self::around(records, 1.0, 50)
    }

    /// Coordinate `i` of `resolution` along `axis`; a single point sits at the midpoint.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        let (lo, hi) = self.bounds[axis];
        if self.resolution == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (self.resolution - 1) as f64
        }
    }

    /// Plane points in image order: rows from the top (largest second
    /// coordinate) down, columns left to right.
    pub fn plane_points(&self) -> Result<Matrix> {
        if self.bounds.len() != 2 {
            return Err(Error::InvalidArgument(alloc::format!(
                "plane grids need a 2-dimensional latent space, got {}",
                self.bounds.len()
            )));
        }
        let r = self.resolution;
        let mut m = Matrix::zeros(r * r, 2);
        for row in 0..r {
            for col in 0..r {
                m.set(row * r + col, 0, self.coord(0, col));
                m.set(row * r + col, 1, self.coord(1, r - 1 - row));
            }
        }
        Ok(m)
    }
}

/// 8-bit grayscale raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: alloc::vec![0; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }
}

/// Maps `[0, 1]` to `0..=255`, clamping outside values.
pub fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// `H_l(z) / G(z)` at every plane point, in image order.
pub fn heatmap_values(records: &RecordSet, grid: &GridSpec, class: usize) -> Result<Vec<f64>> {
    if class >= records.target_dim() {
        return Err(Error::IndexOutOfRange {
            index: class,
            len: records.target_dim(),
        });
    }
    let pts = grid.plane_points()?;
    if records.latent_dim() != 2 {
        return Err(Error::InvalidArgument("heatmaps need a 2-dimensional latent space".into()));
    }
    (0..pts.rows())
        .map(|p| {
            let (h, g) = log_h_and_g(pts.row(p), records)?;
            Ok((h[class] - g).exp())
        })
        .collect()
}

/// Heatmap for `class`: probability 1 is black, 0 is white.
pub fn class_heatmap(records: &RecordSet, grid: &GridSpec, class: usize) -> Result<GrayImage> {
    let values = heatmap_values(records, grid, class)?;
    let r = grid.resolution;
    Ok(GrayImage {
        width: r,
        height: r,
        pixels: values.iter().map(|&p| to_byte(1.0 - p)).collect(),
    })
}

const POINT_CHUNK: usize = 256;

/// Pixel posteriors at fixed latent points (`points` is P x N), one row per
/// point. `dim` restricts densities to one latent dimension.
pub fn reconstruct_at(records: &RecordSet, points: &Matrix, dim: Option<usize>) -> Result<Matrix> {
    if records.is_empty() {
        return Err(Error::Empty("record set"));
    }
    let j = records.target_dim();
    let mut out = Matrix::zeros(points.rows(), j);
    let values = Arc::clone(&records.targets);
    for start in (0..points.rows()).step_by(POINT_CHUNK) {
        let end = (start + POINT_CHUNK).min(points.rows());
        let mut tape = Tape::new();
        let z = tape.constant(points.slice_rows(start, end));
        let r = ratio_on_tape(&mut tape, z, records, &values, f64::NEG_INFINITY, dim)?;
        let v = tape.value(r);
        for row in 0..end - start {
            out.row_mut(start + row).copy_from_slice(v.row(row));
        }
    }
    Ok(out)
}

fn tile(image: &mut GrayImage, tx: usize, ty: usize, shape: (usize, usize), pixels: &[f64]) {
    let (w, h) = shape;
    for y in 0..h {
        for x in 0..w {
            image.set(tx * w + x, ty * h + y, to_byte(pixels[y * w + x]));
        }
    }
}

fn check_shape(records: &RecordSet, shape: (usize, usize)) -> Result<()> {
    if shape.0 * shape.1 != records.target_dim() {
        return Err(Error::LengthMismatch {
            what: "image pixels",
            expected: records.target_dim(),
            found: shape.0 * shape.1,
        });
    }
    Ok(())
}

/// R x R tiles of `(width, height)` images, one reconstruction per plane point.
pub fn reconstruction_grid(pixels: &RecordSet, grid: &GridSpec, shape: (usize, usize)) -> Result<GrayImage> {
    check_shape(pixels, shape)?;
    let pts = grid.plane_points()?;
    let rec = reconstruct_at(pixels, &pts, None)?;
    let r = grid.resolution;
    let mut img = GrayImage::new(r * shape.0, r * shape.1);
    for row in 0..r {
        for col in 0..r {
            tile(&mut img, col, row, shape, rec.row(row * r + col));
        }
    }
    Ok(img)
}

/// Sweep range for each latent dimension: `[min mu_i - 2, max mu_i + 2]`
/// over the given means (one row per sample).
pub fn strip_ranges(mu: &Matrix) -> Result<Vec<(f64, f64)>> {
    if mu.rows() == 0 {
        return Err(Error::Empty("sample means"));
    }
    Ok((0..mu.cols())
        .map(|i| {
            let (lo, hi) = (0..mu.rows()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(mu.get(r, i)), hi.max(mu.get(r, i)))
            });
            (lo - 2.0, hi + 2.0)
        })
        .collect())
}

/// One row per latent dimension; row `i` sweeps `z_i` across `ranges[i]` in
/// `steps` equal steps and renders the reconstruction that sees only `z_i`.
pub fn per_latent_strip(pixels: &RecordSet, ranges: &[(f64, f64)], steps: usize, shape: (usize, usize)) -> Result<GrayImage> {
    check_shape(pixels, shape)?;
    let n = pixels.latent_dim();
    if ranges.len() != n {
        return Err(Error::LengthMismatch {
            what: "strip ranges",
            expected: n,
            found: ranges.len(),
        });
    }
    let grid = GridSpec::new(ranges.to_vec(), steps)?;
    let mut img = GrayImage::new(steps * shape.0, n * shape.1);
    for d in 0..n {
        let mut pts = Matrix::zeros(steps, n);
        for s in 0..steps {
            pts.set(s, d, grid.coord(d, s));
        }
        let rec = reconstruct_at(pixels, &pts, Some(d))?;
        for s in 0..steps {
            tile(&mut img, s, d, shape, rec.row(s));
        }
    }
    Ok(img)
}
