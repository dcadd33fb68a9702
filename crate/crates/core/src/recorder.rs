//! Sliding window of recent training statistics `(targets, mu, sigma)`.
//!
//! The window is a ring buffer over fixed-capacity matrices shared through
//! `Arc`, so a tape can borrow the current window without copying it.
//! Writes go through copy-on-write and never disturb a live view.

use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result};

/// How recorded targets are validated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    /// Hard class labels: one-hot rows.
    OneHot,
    /// Independent Bernoulli parameters in `[0, 1]` (e.g. pixels).
    Soft,
}

const ONE_HOT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct RecordEntry {
    pub targets: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl RecordEntry {
    pub fn new(targets: Vec<f64>, mu: Vec<f64>, sigma: Vec<f64>) -> Self {
        Self { targets, mu, sigma }
    }

    pub fn validate(&self, kind: TargetKind) -> Result<()> {
        validate_row(&self.targets, &self.mu, &self.sigma, kind)
    }
}

fn validate_row(targets: &[f64], mu: &[f64], sigma: &[f64], kind: TargetKind) -> Result<()> {
    if mu.len() != sigma.len() {
        return Err(Error::LengthMismatch {
            what: "record sigma",
            expected: mu.len(),
            found: sigma.len(),
        });
    }
    if let Some((index, &value)) = targets.iter().enumerate().find(|(_, t)| !(0.0..=1.0).contains(*t)) {
        return Err(Error::InvalidTarget { index, value });
    }
    if kind == TargetKind::OneHot {
        let s: f64 = targets.iter().sum();
        if (s - 1.0).abs() > ONE_HOT_TOL {
            return Err(Error::InvalidArgument(alloc::format!("hard-label targets sum to {s}, not 1")));
        }
    }
    if let Some(&s) = sigma.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidSigma(s));
    }
    if mu.iter().any(|m| !m.is_finite()) {
        return Err(Error::NonFinite("record mu".into()));
    }
    Ok(())
}

/// Read-only view of recorded statistics: rows `0..len` of each matrix.
///
/// Row order is storage order. Every sum over records is order-independent,
/// so views taken mid-training need not be rotated.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordSet {
    pub(crate) targets: Arc<Matrix>,
    pub(crate) mu: Arc<Matrix>,
    pub(crate) sigma: Arc<Matrix>,
    pub(crate) len: usize,
}

impl RecordSet {
    /// Builds a standalone set from full matrices (one row per record).
    pub fn from_matrices(targets: Matrix, mu: Matrix, sigma: Matrix, kind: TargetKind) -> Result<Self> {
        let len = targets.rows();
        if len == 0 {
            return Err(Error::Empty("record set"));
        }
        for (what, m) in [("record mu rows", &mu), ("record sigma rows", &sigma)] {
            if m.rows() != len {
                return Err(Error::LengthMismatch {
                    what,
                    expected: len,
                    found: m.rows(),
                });
            }
        }
        for r in 0..len {
            validate_row(targets.row(r), mu.row(r), sigma.row(r), kind)?;
        }
        Ok(Self {
            targets: Arc::new(targets),
            mu: Arc::new(mu),
            sigma: Arc::new(sigma),
            len,
        })
    }

    pub fn from_entries(entries: &[RecordEntry], kind: TargetKind) -> Result<Self> {
        let first = entries.first().ok_or(Error::Empty("record set"))?;
        let (m, n) = (first.targets.len(), first.mu.len());
        let mut t = Matrix::zeros(entries.len(), m);
        let mut mu = Matrix::zeros(entries.len(), n);
        let mut s = Matrix::zeros(entries.len(), n);
        for (r, e) in entries.iter().enumerate() {
            if e.targets.len() != m || e.mu.len() != n || e.sigma.len() != n {
                return Err(Error::LengthMismatch {
                    what: "record entry",
                    expected: m + 2 * n,
                    found: e.targets.len() + e.mu.len() + e.sigma.len(),
                });
            }
            t.row_mut(r).copy_from_slice(&e.targets);
            mu.row_mut(r).copy_from_slice(&e.mu);
            s.row_mut(r).copy_from_slice(&e.sigma);
        }
        Self::from_matrices(t, mu, s, kind)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn target_dim(&self) -> usize {
        self.targets.cols()
    }

    pub fn latent_dim(&self) -> usize {
        self.mu.cols()
    }

    pub fn targets(&self, k: usize) -> &[f64] {
        self.targets.row(k)
    }

    pub fn mu(&self, k: usize) -> &[f64] {
        self.mu.row(k)
    }

    pub fn sigma(&self, k: usize) -> &[f64] {
        self.sigma.row(k)
    }

    pub fn entry(&self, k: usize) -> RecordEntry {
        RecordEntry::new(self.targets(k).to_vec(), self.mu(k).to_vec(), self.sigma(k).to_vec())
    }

    pub fn entries(&self) -> Vec<RecordEntry> {
        (0..self.len).map(|k| self.entry(k)).collect()
    }

    /// Compact copies of the three matrices (exactly `len` rows each), in
    /// the order `(targets, mu, sigma)`.
    pub fn to_matrices(&self) -> (Matrix, Matrix, Matrix) {
        (
            self.targets.slice_rows(0, self.len),
            self.mu.slice_rows(0, self.len),
            self.sigma.slice_rows(0, self.len),
        )
    }

    /// Same statistics with different targets (one row per record).
    pub fn with_targets(&self, targets: Matrix, kind: TargetKind) -> Result<Self> {
        let (_, mu, sigma) = self.to_matrices();
        Self::from_matrices(targets, mu, sigma, kind)
    }
}

/// FIFO window of the most recent `capacity` records.
#[derive(Clone, Debug)]
pub struct Recorder {
    capacity: usize,
    kind: TargetKind,
    targets: Arc<Matrix>,
    mu: Arc<Matrix>,
    sigma: Arc<Matrix>,
    /// Slot the next push writes to.
    head: usize,
    len: usize,
    pushed: u64,
}

impl Recorder {
    pub fn new(capacity: usize, target_dim: usize, latent_dim: usize, kind: TargetKind) -> Result<Self> {
        if capacity == 0 || target_dim == 0 || latent_dim == 0 {
            return Err(Error::InvalidArgument("recorder dimensions must be positive".into()));
        }
        Ok(Self {
            capacity,
            kind,
            targets: Arc::new(Matrix::zeros(capacity, target_dim)),
            mu: Arc::new(Matrix::zeros(capacity, latent_dim)),
            sigma: Arc::new(Matrix::filled(capacity, latent_dim, 1.0)),
            head: 0,
            len: 0,
            pushed: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn kind(&self) -> TargetKind {
        self.kind
    }

    /// Total pushes since creation, including evicted records.
    pub fn total_pushed(&self) -> u64 {
        self.pushed
    }

    pub fn push(&mut self, entry: &RecordEntry) -> Result<()> {
        self.check_dims(entry.targets.len(), entry.mu.len(), entry.sigma.len())?;
        entry.validate(self.kind)?;
        self.write(&entry.targets, &entry.mu, &entry.sigma);
        Ok(())
    }

    /// Pushes every row in order. All rows are validated before any is stored.
    pub fn push_batch(&mut self, targets: &Matrix, mu: &Matrix, sigma: &Matrix) -> Result<()> {
        let b = targets.rows();
        if mu.rows() != b || sigma.rows() != b {
            return Err(Error::LengthMismatch {
                what: "record batch rows",
                expected: b,
                found: mu.rows().min(sigma.rows()),
            });
        }
        self.check_dims(targets.cols(), mu.cols(), sigma.cols())?;
        for r in 0..b {
            validate_row(targets.row(r), mu.row(r), sigma.row(r), self.kind)?;
        }
        for r in 0..b {
            self.write(targets.row(r), mu.row(r), sigma.row(r));
        }
        Ok(())
    }

    fn check_dims(&self, m: usize, n: usize, ns: usize) -> Result<()> {
        let pairs = [
            ("record targets", self.targets.cols(), m),
            ("record mu", self.mu.cols(), n),
            ("record sigma", self.sigma.cols(), ns),
        ];
        for (what, expected, found) in pairs {
            if expected != found {
                return Err(Error::LengthMismatch { what, expected, found });
            }
        }
        Ok(())
    }

    fn write(&mut self, t: &[f64], mu: &[f64], sigma: &[f64]) {
        let h = self.head;
        Arc::make_mut(&mut self.targets).row_mut(h).copy_from_slice(t);
        Arc::make_mut(&mut self.mu).row_mut(h).copy_from_slice(mu);
        Arc::make_mut(&mut self.sigma).row_mut(h).copy_from_slice(sigma);
        self.head = (h + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
        self.pushed += 1;
    }

    /// Zero-copy view of the current window in storage order.
    pub fn view(&self) -> Result<RecordSet> {
        if self.len == 0 {
            return Err(Error::Empty("recorder"));
        }
        Ok(RecordSet {
            targets: Arc::clone(&self.targets),
            mu: Arc::clone(&self.mu),
            sigma: Arc::clone(&self.sigma),
            len: self.len,
        })
    }

    /// Storage slot of the `i`-th oldest surviving record.
    fn slot(&self, i: usize) -> usize {
        let start = if self.len < self.capacity { 0 } else { self.head };
        (start + i) % self.capacity
    }

    /// Frozen copy of the window, oldest record first.
    pub fn snapshot(&self) -> Result<RecordSet> {
        if self.len == 0 {
            return Err(Error::Empty("recorder"));
        }
        let order: Vec<usize> = (0..self.len).map(|i| self.slot(i)).collect();
        let gather = |m: &Matrix| crate::data::gather_rows(m, &order);
        Ok(RecordSet {
            targets: Arc::new(gather(&self.targets)),
            mu: Arc::new(gather(&self.mu)),
            sigma: Arc::new(gather(&self.sigma)),
            len: self.len,
        })
    }
}

/// FIFO of plain values with the same eviction rule, used to remember which
/// samples make up the current window.
#[derive(Clone, Debug)]
pub struct IndexWindow {
    capacity: usize,
    items: alloc::collections::VecDeque<usize>,
}

impl IndexWindow {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: alloc::collections::VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, i: usize) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(i);
    }

    /// Oldest first.
    pub fn to_vec(&self) -> Vec<usize> {
        self.items.iter().copied().collect()
    }
}
