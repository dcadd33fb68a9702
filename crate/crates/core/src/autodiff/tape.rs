use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::param::{ParamId, ParamStore};
use crate::matrix::{gemm, Operand};
use crate::prob::LN_SQRT_2PI;
use crate::{Error, Matrix, Result};

/// Index of a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) enum Op {
    Constant,
    Variable,
    Parameter(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    SubCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Neg(Var),
    MatMul(Var, Var),
    Exp(Var),
    Ln(Var),
    Square(Var),
    MaxConst(Var, f64),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Sum(Var),
    LogSumExpRows(Var),
    SliceCols(Var, usize),
    GaussianLogDensity {
        z: Var,
        centers: Arc<Matrix>,
        inv_var: Matrix,
        dim: Option<usize>,
    },
    LogMix {
        logw: Var,
        values: Arc<Matrix>,
        row_max: Vec<f64>,
        sums: Matrix,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Variable => "variable",
            Op::Parameter(_) => "parameter",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::SubCol(..) => "sub_col",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Neg(..) => "neg",
            Op::MatMul(..) => "matmul",
            Op::Exp(..) => "exp",
            Op::Ln(..) => "ln",
            Op::Square(..) => "square",
            Op::MaxConst(..) => "max_const",
            Op::Relu(..) => "relu",
            Op::Tanh(..) => "tanh",
            Op::Sigmoid(..) => "sigmoid",
            Op::Sum(..) => "sum",
            Op::LogSumExpRows(..) => "log_sum_exp_rows",
            Op::SliceCols(..) => "slice_cols",
            Op::GaussianLogDensity { .. } => "gaussian_log_density",
            Op::LogMix { .. } => "log_mix",
        }
    }
}

pub(crate) struct Node {
    pub op: Op,
    pub value: Matrix,
    pub requires_grad: bool,
}

/// Define-by-run record of a computation over matrices.
///
/// Every operation is evaluated eagerly when it is pushed, so node values are
/// always populated and inputs always precede their consumers.
#[derive(Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
}

impl core::fmt::Debug for Tape {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_list()
            .entries(self.nodes.iter().map(|n| (n.op.name(), n.value.shape())))
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }

    fn push(&mut self, op: Op, value: Matrix, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::ShapeMismatch {
            node: self.nodes.len(),
            op,
            left: self.shape(a),
            right: self.shape(b),
        }
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(Op::Constant, value, false)
    }

    /// Differentiable input not backed by a parameter store.
    pub fn variable(&mut self, value: Matrix) -> Var {
        self.push(Op::Variable, value, true)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let value = store.get(id).value().clone();
        self.push(Op::Parameter(id), value, true)
    }

    fn elementwise(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch(name, a, b));
        }
        let value = self.value(a).zip_map(self.value(b), f);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(op, value, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// `a` (R x C) plus the row vector `row` (1 x C) on every row.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        if self.shape(row) != (1, c) {
            return Err(self.mismatch("add_row", a, row));
        }
        let rv = self.value(row).data();
        let mut value = self.value(a).clone();
        for i in 0..r {
            for (x, y) in value.row_mut(i).iter_mut().zip(rv) {
                *x += y;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(Op::AddRow(a, row), value, rg))
    }

    /// `a` (R x C) minus the column vector `col` (R x 1) on every column.
    pub fn sub_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (r, _) = self.shape(a);
        if self.shape(col) != (r, 1) {
            return Err(self.mismatch("sub_col", a, col));
        }
        let mut value = self.value(a).clone();
        for i in 0..r {
            let s = self.value(col).data()[i];
            value.row_mut(i).iter_mut().for_each(|x| *x -= s);
        }
        let rg = self.rg(a) || self.rg(col);
        Ok(self.push(Op::SubCol(a, col), value, rg))
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(op, value, rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, Op::Scale(a, s), |x| x * s)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + s)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, Op::Neg(a), |x| -x)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), |x| x.exp())
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, Op::Ln(a), |x| x.ln())
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    /// Elementwise `max(a, c)`; the gradient is cut where `a < c`.
    pub fn max_const(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::MaxConst(a, c), |x| if x < c { c } else { x })
    }

    /// Elementwise `min(a, c)`, built from `neg` and `max_const`.
    pub fn min_const(&mut self, a: Var, c: f64) -> Var {
        let n = self.neg(a);
        let m = self.max_const(n, -c);
        self.neg(m)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), |x| x.tanh())
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(self.mismatch("matmul", a, b));
        }
        let mut value = Matrix::zeros(m, n);
        gemm(
            1.0,
            Operand::of(self.value(a)),
            Operand::of(self.value(b)),
            0.0,
            value.data_mut(),
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::MatMul(a, b), value, rg))
    }

    /// Sum of all entries, as a 1x1 node.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Op::Sum(a), Matrix::scalar(s), rg)
    }

    /// Row-wise `ln sum exp`, shifted by the row maximum. R x C -> R x 1.
    pub fn log_sum_exp_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        if c == 0 {
            return Err(Error::Empty("log_sum_exp_rows input row"));
        }
        let src = self.value(a);
        let mut out = Matrix::zeros(r, 1);
        for i in 0..r {
            out.data_mut()[i] = crate::prob::log_sum_exp_unchecked(src.row(i));
        }
        let rg = self.rg(a);
        Ok(self.push(Op::LogSumExpRows(a), out, rg))
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if start > end || end > c {
            return Err(Error::ShapeMismatch {
                node: self.nodes.len(),
                op: "slice_cols",
                left: (r, c),
                right: (start, end),
            });
        }
        let src = self.value(a);
        let mut value = Matrix::zeros(r, end - start);
        for i in 0..r {
            value.row_mut(i).copy_from_slice(&src.row(i)[start..end]);
        }
        let rg = self.rg(a);
        Ok(self.push(Op::SliceCols(a, start), value, rg))
    }

    /// Pairwise Gaussian log densities.
    ///
    /// `z` is B x N; `centers` and `scales` hold at least `rows` rows of N
    /// columns. Output `[b, k] = sum_i ln N(z[b,i]; centers[k,i], scales[k,i])`,
    /// restricted to the single dimension `dim` when given. Only `z` is
    /// differentiated: centers and scales are detached statistics.
    pub fn gaussian_log_density(
        &mut self,
        z: Var,
        centers: &Arc<Matrix>,
        scales: &Matrix,
        rows: usize,
        dim: Option<usize>,
    ) -> Result<Var> {
        let (b, n) = self.shape(z);
        if centers.cols() != n || scales.cols() != n || centers.rows() < rows || scales.rows() < rows {
            return Err(Error::ShapeMismatch {
                node: self.nodes.len(),
                op: "gaussian_log_density",
                left: (b, n),
                right: centers.shape(),
            });
        }
        if let Some(d) = dim {
            if d >= n {
                return Err(Error::IndexOutOfRange { index: d, len: n });
            }
        }
        let (lo, hi) = dim.map_or((0, n), |d| (d, d + 1));
        let mut inv_var = Matrix::zeros(rows, n);
        let mut norm = vec![0.0; rows];
        for k in 0..rows {
            for i in lo..hi {
                let s = scales.get(k, i);
                if !(s > 0.0) {
                    return Err(Error::InvalidSigma(s));
                }
                inv_var.set(k, i, 1.0 / (s * s));
                norm[k] -= LN_SQRT_2PI + s.ln();
            }
        }
        let zv = self.value(z);
        let mut out = Matrix::zeros(b, rows);
        for bi in 0..b {
            let zr = zv.row(bi);
            let orow = out.row_mut(bi);
            for k in 0..rows {
                let cr = &centers.row(k)[lo..hi];
                let ir = &inv_var.row(k)[lo..hi];
                let mut q = 0.0;
                for ((zi, ci), ii) in zr[lo..hi].iter().zip(cr).zip(ir) {
                    let d = zi - ci;
                    q += d * d * ii;
                }
                orow[k] = norm[k] - 0.5 * q;
            }
        }
        let rg = self.rg(z);
        let op = Op::GaussianLogDensity {
            z,
            centers: Arc::clone(centers),
            inv_var,
            dim,
        };
        Ok(self.push(op, out, rg))
    }

    /// Log-space mixture: `out[b, l] = ln sum_k exp(logw[b, k]) * values[k, l]`.
    ///
    /// `logw` is B x n and `values` must have at least n rows with entries in
    /// `[0, 1]`; values are detached. The sum is shifted by each row's maximum
    /// log weight, so it is exact whenever the weighted sum itself does not
    /// underflow. Rows whose sum is zero give `-inf`.
    pub fn log_mix(&mut self, logw: Var, values: &Arc<Matrix>) -> Result<Var> {
        let (b, n) = self.shape(logw);
        if values.rows() < n {
            return Err(Error::ShapeMismatch {
                node: self.nodes.len(),
                op: "log_mix",
                left: (b, n),
                right: values.shape(),
            });
        }
        if n == 0 {
            return Err(Error::Empty("log_mix weights"));
        }
        let m = values.cols();
        let lw = self.value(logw);
        let mut row_max = vec![f64::NEG_INFINITY; b];
        let mut w = Matrix::zeros(b, n);
        for bi in 0..b {
            let mx = lw.row(bi).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row_max[bi] = mx;
            let wr = w.row_mut(bi);
            if mx > f64::NEG_INFINITY {
                for (wk, &a) in wr.iter_mut().zip(lw.row(bi)) {
                    *wk = (a - mx).exp();
                }
            }
        }
        let mut sums = Matrix::zeros(b, m);
        let vals = Operand {
            data: values.data(),
            rows: n,
            cols: m,
            transposed: false,
        };
        gemm(1.0, Operand::of(&w), vals, 0.0, sums.data_mut());
        let mut out = Matrix::zeros(b, m);
        for bi in 0..b {
            let mx = row_max[bi];
            for (o, &s) in out.row_mut(bi).iter_mut().zip(sums.row(bi)) {
                *o = if s > 0.0 { mx + s.ln() } else { f64::NEG_INFINITY };
            }
        }
        let rg = self.rg(logw);
        let op = Op::LogMix {
            logw,
            values: Arc::clone(values),
            row_max,
            sums,
        };
        Ok(self.push(op, out, rg))
    }

    /// Shape check used by callers that take externally supplied inputs.
    pub fn expect_shape(&self, v: Var, shape: (usize, usize)) -> Result<()> {
        if self.shape(v) != shape {
            return Err(Error::ShapeMismatch {
                node: v.0,
                op: self.op_name(v),
                left: self.shape(v),
                right: shape,
            });
        }
        Ok(())
    }

    /// Node index and op name of the first non-finite value, if any.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        self.nodes
            .iter()
            .enumerate()
            .find(|(_, n)| {
                // -inf is a legitimate log of zero mass; NaN and +inf are not.
                n.value.data().iter().any(|x| x.is_nan() || *x == f64::INFINITY)
            })
            .map(|(i, n)| (i, n.op.name()))
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
