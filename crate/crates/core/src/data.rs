//! In-memory datasets and the synthetic Gaussian-blob generator.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::rng::NoiseSource;
use crate::{Error, Matrix, Result};

/// Labeled samples, one row of `inputs` per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Matrix,
    labels: Vec<usize>,
    classes: usize,
    /// `(width, height)` when rows are images with pixels in `[0, 1]`.
    image_shape: Option<(usize, usize)>,
}

impl Dataset {
    pub fn new(inputs: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::LengthMismatch {
                what: "labels",
                expected: inputs.rows(),
                found: labels.len(),
            });
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::InvalidArgument(alloc::format!(
                "label {l} at sample {i} is outside 0..{classes}"
            )));
        }
        Ok(Self {
            inputs,
            labels,
            classes,
            image_shape: None,
        })
    }

    /// Marks the rows as `width x height` images; pixels must already be in `[0, 1]`.
    pub fn with_image_shape(mut self, width: usize, height: usize) -> Result<Self> {
        if width * height != self.inputs.cols() {
            return Err(Error::LengthMismatch {
                what: "image pixels",
                expected: self.inputs.cols(),
                found: width * height,
            });
        }
        if let Some(&p) = self.inputs.data().iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidArgument(alloc::format!("pixel value {p} outside [0, 1]")));
        }
        self.image_shape = Some((width, height));
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn image_shape(&self) -> Option<(usize, usize)> {
        self.image_shape
    }

    pub fn input(&self, i: usize) -> &[f64] {
        self.inputs.row(i)
    }

    /// First `n` samples (or all, if fewer).
    pub fn take(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            inputs: self.inputs.slice_rows(0, n),
            labels: self.labels[..n].to_vec(),
            classes: self.classes,
            image_shape: self.image_shape,
        }
    }

    /// Rows gathered from `indices`, in that order.
    pub fn batch_inputs(&self, indices: &[usize]) -> Matrix {
        gather_rows(&self.inputs, indices)
    }

    /// One-hot label rows for `indices`.
    pub fn batch_one_hot(&self, indices: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(indices.len(), self.classes);
        for (r, &i) in indices.iter().enumerate() {
            out.set(r, self.labels[i], 1.0);
        }
        out
    }

    /// Count of each label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

pub(crate) fn gather_rows(m: &Matrix, indices: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(indices.len(), m.cols());
    for (r, &i) in indices.iter().enumerate() {
        out.row_mut(r).copy_from_slice(m.row(i));
    }
    out
}

/// Radius of the circle the blob means sit on.
pub const BLOB_RADIUS: f64 = 4.0;

/// `per_class` samples for each of `classes` isotropic Gaussian blobs.
///
/// Class means are equally spaced on a circle of radius 4 in the first two
/// input dimensions (zero elsewhere); samples have standard deviation `spread`
/// around their mean. Samples are grouped by class.
pub fn make_blobs(per_class: usize, classes: usize, input_dim: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::InvalidArgument("make_blobs needs at least 2 classes".into()));
    }
    if input_dim < 2 {
        return Err(Error::InvalidArgument("make_blobs needs input_dim >= 2".into()));
    }
    if !(spread >= 0.0) {
        return Err(Error::InvalidArgument("blob spread must be non-negative".into()));
    }
    let mut rng = NoiseSource::new(seed);
    let mut data = Vec::with_capacity(per_class * classes * input_dim);
    let mut labels = Vec::with_capacity(per_class * classes);
    for c in 0..classes {
        let angle = 2.0 * core::f64::consts::PI * c as f64 / classes as f64;
        let mut mean = alloc::vec![0.0; input_dim];
        mean[0] = BLOB_RADIUS * angle.cos();
        mean[1] = BLOB_RADIUS * angle.sin();
        for _ in 0..per_class {
            data.extend(mean.iter().map(|&m| m + spread * rng.standard_normal()));
            labels.push(c);
        }
    }
    let inputs = Matrix::from_vec(per_class * classes, input_dim, data)?;
    Dataset::new(inputs, labels, classes)
}

/// Mean of each class's rows.
pub fn class_means(ds: &Dataset) -> Vec<Vec<f64>> {
    let mut sums = alloc::vec![alloc::vec![0.0; ds.input_dim()]; ds.classes()];
    let counts = ds.class_counts();
    for i in 0..ds.len() {
        for (s, x) in sums[ds.labels()[i]].iter_mut().zip(ds.input(i)) {
            *s += x;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        s.iter_mut().for_each(|x| *x /= n.max(1) as f64);
    }
    sums
}
