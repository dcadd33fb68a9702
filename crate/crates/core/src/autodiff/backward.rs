use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::param::ParamStore;
use super::tape::{Op, Tape, Var};
use crate::matrix::{gemm, Operand};
use crate::{Error, Matrix, Result};

/// Adjoints of every node reached from the seed.
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Adjoint of `v`; `None` when no gradient reached it (constants,
    /// detached inputs, nodes off the path to the seed).
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.adjoints.get(v.0).and_then(Option::as_ref)
    }

    /// Adjoint of `v`, with zero meaning "absent".
    pub fn get_or_zero(&self, v: Var, shape: (usize, usize)) -> Matrix {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}

fn slot(adj: &mut [Option<Matrix>], v: Var, shape: (usize, usize)) -> &mut Matrix {
    adj[v.0].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1))
}

impl Tape {
    /// Reverse pass from the 1x1 node `seed`.
    ///
    /// Adds the gradient of every parameter leaf into `store` (so two passes
    /// without zeroing accumulate twice) and returns all node adjoints.
    pub fn backward(&self, seed: Var, store: &mut ParamStore) -> Result<Gradients> {
        let grads = self.gradients(seed)?;
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Parameter(id), Some(g)) = (&node.op, &grads.adjoints[i]) {
                store.get_mut(*id).grad_mut().add_assign(g);
            }
        }
        Ok(grads)
    }

    /// Reverse pass without touching any parameter store.
    pub fn gradients(&self, seed: Var) -> Result<Gradients> {
        let shape = self.shape(seed);
        if shape != (1, 1) {
            return Err(Error::NonScalarSeed { node: seed.0, shape });
        }
        let mut adj: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[seed.0] = Some(Matrix::scalar(1.0));

        for i in (0..=seed.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let (before, after) = adj.split_at_mut(i);
            let Some(g) = after[0].as_ref() else {
                continue;
            };
            let out = &node.value;
            let wants = |v: Var| self.nodes[v.0].requires_grad;
            let val = |v: Var| &self.nodes[v.0].value;

            match &node.op {
                Op::Constant | Op::Variable | Op::Parameter(_) => {}
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        if wants(v) {
                            slot(before, v, out.shape()).add_assign(g);
                        }
                    }
                }
                Op::Sub(a, b) => {
                    if wants(*a) {
                        slot(before, *a, out.shape()).add_assign(g);
                    }
                    if wants(*b) {
                        let s = slot(before, *b, out.shape());
                        for (x, y) in s.data_mut().iter_mut().zip(g.data()) {
                            *x -= y;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    if wants(*a) {
                        let s = slot(before, *a, out.shape());
                        for ((x, gy), y) in s.data_mut().iter_mut().zip(g.data()).zip(bv.data()) {
                            *x += gy * y;
                        }
                    }
                    if wants(*b) {
                        let s = slot(before, *b, out.shape());
                        for ((x, gy), y) in s.data_mut().iter_mut().zip(g.data()).zip(av.data()) {
                            *x += gy * y;
                        }
                    }
                }
                Op::AddRow(a, row) => {
                    if wants(*a) {
                        slot(before, *a, out.shape()).add_assign(g);
                    }
                    if wants(*row) {
                        let s = slot(before, *row, (1, out.cols()));
                        for r in 0..g.rows() {
                            for (x, y) in s.data_mut().iter_mut().zip(g.row(r)) {
                                *x += y;
                            }
                        }
                    }
                }
                Op::SubCol(a, col) => {
                    if wants(*a) {
                        slot(before, *a, out.shape()).add_assign(g);
                    }
                    if wants(*col) {
                        let s = slot(before, *col, (out.rows(), 1));
                        for r in 0..g.rows() {
                            s.data_mut()[r] -= g.row(r).iter().sum::<f64>();
                        }
                    }
                }
                Op::Scale(a, k) => {
                    let s = slot(before, *a, out.shape());
                    for (x, y) in s.data_mut().iter_mut().zip(g.data()) {
                        *x += k * y;
                    }
                }
                Op::AddScalar(a) => slot(before, *a, out.shape()).add_assign(g),
                Op::Neg(a) => {
                    let s = slot(before, *a, out.shape());
                    for (x, y) in s.data_mut().iter_mut().zip(g.data()) {
                        *x -= y;
                    }
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    if wants(*a) {
                        let s = slot(before, *a, av.shape());
                        gemm(1.0, Operand::of(g), Operand::of(bv).t(), 1.0, s.data_mut());
                    }
                    if wants(*b) {
                        let s = slot(before, *b, bv.shape());
                        gemm(1.0, Operand::of(av).t(), Operand::of(g), 1.0, s.data_mut());
                    }
                }
                Op::Exp(a) => unary(before, *a, g, |j, gy| gy * out.data()[j]),
                Op::Ln(a) => {
                    let av = val(*a);
                    unary(before, *a, g, |j, gy| if gy == 0.0 { 0.0 } else { gy / av.data()[j] })
                }
                Op::Square(a) => {
                    let av = val(*a);
                    unary(before, *a, g, |j, gy| 2.0 * av.data()[j] * gy)
                }
                Op::MaxConst(a, c) => {
                    let av = val(*a);
                    unary(before, *a, g, |j, gy| if av.data()[j] < *c { 0.0 } else { gy })
                }
                Op::Relu(a) => {
                    let av = val(*a);
                    unary(before, *a, g, |j, gy| if av.data()[j] > 0.0 { gy } else { 0.0 })
                }
                Op::Tanh(a) => unary(before, *a, g, |j, gy| {
                    let t = out.data()[j];
                    gy * (1.0 - t * t)
                }),
                Op::Sigmoid(a) => unary(before, *a, g, |j, gy| {
                    let s = out.data()[j];
                    gy * s * (1.0 - s)
                }),
                Op::Sum(a) => {
                    let gy = g.item();
                    let shape = val(*a).shape();
                    slot(before, *a, shape).data_mut().iter_mut().for_each(|x| *x += gy);
                }
                Op::LogSumExpRows(a) => {
                    let av = val(*a);
                    let s = slot(before, *a, av.shape());
                    for r in 0..av.rows() {
                        let (lse, gy) = (out.data()[r], g.data()[r]);
                        if lse == f64::NEG_INFINITY || gy == 0.0 {
                            continue;
                        }
                        for (x, &v) in s.row_mut(r).iter_mut().zip(av.row(r)) {
                            *x += gy * (v - lse).exp();
                        }
                    }
                }
                Op::SliceCols(a, start) => {
                    let shape = val(*a).shape();
                    let s = slot(before, *a, shape);
                    let w = out.cols();
                    for r in 0..out.rows() {
                        for (x, y) in s.row_mut(r)[*start..*start + w].iter_mut().zip(g.row(r)) {
                            *x += y;
                        }
                    }
                }
                Op::GaussianLogDensity {
                    z,
                    centers,
                    inv_var,
                    dim,
                } => {
                    let zv = val(*z);
                    let n = zv.cols();
                    let (lo, hi) = dim.map_or((0, n), |d| (d, d + 1));
                    let rows = out.cols();
                    let s = slot(before, *z, zv.shape());
                    // d/dz_i of ln N(z; c, s) = -(z_i - c_i) / s_i^2
                    for b in 0..zv.rows() {
                        let zr = zv.row(b);
                        let gr = g.row(b);
                        let sr = s.row_mut(b);
                        for k in 0..rows {
                            let gk = gr[k];
                            if gk == 0.0 {
                                continue;
                            }
                            let cr = centers.row(k);
                            let ir = inv_var.row(k);
                            for i in lo..hi {
                                sr[i] -= gk * (zr[i] - cr[i]) * ir[i];
                            }
                        }
                    }
                }
                Op::LogMix {
                    logw,
                    values,
                    row_max,
                    sums,
                } => {
                    // d out[b,l] / d logw[b,k] = w[b,k] * values[k,l] / sums[b,l]
                    // with w = exp(logw - row_max); zero-mass entries carry no gradient.
                    let lw = val(*logw);
                    let (b, n) = lw.shape();
                    let m = out.cols();
                    let mut q = Matrix::zeros(b, m);
                    for ((qx, &gy), &sm) in q.data_mut().iter_mut().zip(g.data()).zip(sums.data()) {
                        if gy != 0.0 && sm > 0.0 {
                            *qx = gy / sm;
                        }
                    }
                    let mut r = Matrix::zeros(b, n);
                    let vals = Operand {
                        data: values.data(),
                        rows: n,
                        cols: m,
                        transposed: false,
                    };
                    gemm(1.0, Operand::of(&q), vals.t(), 0.0, r.data_mut());
                    let s = slot(before, *logw, (b, n));
                    for bi in 0..b {
                        let mx = row_max[bi];
                        if mx == f64::NEG_INFINITY {
                            continue;
                        }
                        for ((x, &rv), &a) in s.row_mut(bi).iter_mut().zip(r.row(bi)).zip(lw.row(bi)) {
                            if rv != 0.0 {
                                *x += (a - mx).exp() * rv;
                            }
                        }
                    }
                }
            }
        }
        Ok(Gradients { adjoints: adj })
    }
}

fn unary(before: &mut [Option<Matrix>], a: Var, g: &Matrix, f: impl Fn(usize, f64) -> f64) {
    let s = slot(before, a, g.shape());
    for (j, (x, &gy)) in s.data_mut().iter_mut().zip(g.data()).enumerate() {
        *x += f(j, gy);
    }
}
