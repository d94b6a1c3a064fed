//! Reverse-mode differentiation over a linear tape of matrix operations.
//!
//! Every operation appends a node holding its forward value. `backward` walks
//! the tape in reverse and accumulates adjoints for every node that depends on
//! a differentiable leaf. Only the operations the actor and critic need are
//! provided.

use alloc::vec;
use alloc::vec::Vec;

use super::matrix::{gemm, MatRef, Matrix};
use super::NnError;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    AddBias(usize, usize),
    Add(usize, usize),
    Propagate { input: usize, adj: Matrix },
    Relu(usize),
    Tanh(usize),
    ConcatCols(usize, usize),
    GatherRows { input: usize, rows: Vec<usize> },
    ScatterRows { input: usize, rows: Vec<usize> },
    MeanPoolBlocks { input: usize, block: usize },
    WeightedSum { input: usize, weights: Vec<f64> },
    Mse { input: usize, target: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`; `None` when `var` does not
    /// influence the loss or was recorded as a constant.
    pub fn get(&self, var: Var) -> Option<&Matrix> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Like [`Gradients::get`] but yields a zero matrix of the right shape for
    /// differentiable nodes the loss does not reach.
    pub fn get_or_zeros(&self, var: Var, tape: &Tape) -> Matrix {
        self.get(var).cloned().unwrap_or_else(|| {
            let (r, c) = tape.value(var).shape();
            Matrix::zeros(r, c)
        })
    }
}

fn shape_err(op: &'static str, left: &Matrix, right: &Matrix) -> NnError {
    NnError::Shape {
        op,
        left: left.shape(),
        right: right.shape(),
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

    pub fn value(&self, var: Var) -> &Matrix {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    /// Differentiable leaf (parameter or input whose gradient is wanted).
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let out = av.matmul(bv)?;
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(out, Op::MatMul(a.0, b.0), rg))
    }

    /// Adds a `1 × cols` bias row to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, NnError> {
        let (xv, bv) = (&self.nodes[x.0].value, &self.nodes[bias.0].value);
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(shape_err("add_bias", xv, bv));
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let rg = self.rg(x.0) || self.rg(bias.0);
        Ok(self.push(out, Op::AddBias(x.0, bias.0), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape() != bv.shape() {
            return Err(shape_err("add", av, bv));
        }
        let mut out = av.clone();
        out.add_assign(bv);
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(out, Op::Add(a.0, b.0), rg))
    }

    /// Graph propagation `Â · X` applied independently to each consecutive
    /// block of `Â.rows()` rows of `X` (a batch of graphs sharing `Â`).
    ///
    /// Each output entry sums its neighbour terms in ascending value order, so
    /// relabelling the nodes permutes the output rows bit-exactly.
    pub fn propagate(&mut self, adj: &Matrix, x: Var) -> Result<Var, NnError> {
        let xv = &self.nodes[x.0].value;
        let n = adj.rows();
        if adj.cols() != n || n == 0 || xv.rows() % n != 0 {
            return Err(shape_err("propagate", adj, xv));
        }
        let out = propagate_sorted(adj, xv);
        let rg = self.rg(x.0);
        Ok(self.push(
            out,
            Op::Propagate {
                input: x.0,
                adj: adj.clone(),
            },
            rg,
        ))
    }

    pub fn activation(&mut self, x: Var, act: Activation) -> Var {
        match act {
            Activation::Identity => x,
            Activation::Relu => {
                let mut out = self.nodes[x.0].value.clone();
                for v in out.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                let rg = self.rg(x.0);
                self.push(out, Op::Relu(x.0), rg)
            }
            Activation::Tanh => {
                let mut out = self.nodes[x.0].value.clone();
                for v in out.data_mut() {
                    *v = libm::tanh(*v);
                }
                let rg = self.rg(x.0);
                self.push(out, Op::Tanh(x.0), rg)
            }
        }
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.rows() != bv.rows() {
            return Err(shape_err("concat_cols", av, bv));
        }
        let mut out = Matrix::zeros(av.rows(), av.cols() + bv.cols());
        for r in 0..av.rows() {
            let row = out.row_mut(r);
            row[..av.cols()].copy_from_slice(av.row(r));
            row[av.cols()..].copy_from_slice(bv.row(r));
        }
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(out, Op::ConcatCols(a.0, b.0), rg))
    }

    /// Row `i` of the output is row `rows[i]` of `x`.
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var, NnError> {
        let xv = &self.nodes[x.0].value;
        if rows.iter().any(|&r| r >= xv.rows()) {
            return Err(NnError::Index {
                op: "gather_rows",
                rows: xv.rows(),
            });
        }
        let mut out = Matrix::zeros(rows.len(), xv.cols());
        for (i, &r) in rows.iter().enumerate() {
            out.row_mut(i).copy_from_slice(xv.row(r));
        }
        let rg = self.rg(x.0);
        Ok(self.push(
            out,
            Op::GatherRows {
                input: x.0,
                rows: rows.to_vec(),
            },
            rg,
        ))
    }

    /// Places row `i` of `x` at row `rows[i]` of a zero matrix with
    /// `total_rows` rows. Target rows must be distinct.
    pub fn scatter_rows(&mut self, x: Var, rows: &[usize], total_rows: usize) -> Result<Var, NnError> {
        let xv = &self.nodes[x.0].value;
        if rows.len() != xv.rows() || rows.iter().any(|&r| r >= total_rows) {
            return Err(NnError::Index {
                op: "scatter_rows",
                rows: total_rows,
            });
        }
        let mut out = Matrix::zeros(total_rows, xv.cols());
        for (i, &r) in rows.iter().enumerate() {
            out.row_mut(r).copy_from_slice(xv.row(i));
        }
        let rg = self.rg(x.0);
        Ok(self.push(
            out,
            Op::ScatterRows {
                input: x.0,
                rows: rows.to_vec(),
            },
            rg,
        ))
    }

    /// Averages each consecutive block of `block` rows into one row.
    pub fn mean_pool_blocks(&mut self, x: Var, block: usize) -> Result<Var, NnError> {
        let xv = &self.nodes[x.0].value;
        if block == 0 || xv.rows() % block != 0 {
            return Err(NnError::Index {
                op: "mean_pool_blocks",
                rows: xv.rows(),
            });
        }
        let groups = xv.rows() / block;
        let mut out = Matrix::zeros(groups, xv.cols());
        for g in 0..groups {
            for r in 0..block {
                for (o, v) in out.row_mut(g).iter_mut().zip(xv.row(g * block + r)) {
                    *o += v;
                }
            }
            for o in out.row_mut(g) {
                *o /= block as f64;
            }
        }
        let rg = self.rg(x.0);
        Ok(self.push(out, Op::MeanPoolBlocks { input: x.0, block }, rg))
    }

    /// `Σ_i weights[i] · x[i]` over a column vector, yielding a `1 × 1` node.
    pub fn weighted_sum(&mut self, x: Var, weights: &[f64]) -> Result<Var, NnError> {
        let xv = &self.nodes[x.0].value;
        if xv.cols() != 1 || xv.rows() != weights.len() {
            return Err(NnError::Index {
                op: "weighted_sum",
                rows: xv.rows(),
            });
        }
        let s: f64 = xv.data().iter().zip(weights).map(|(v, w)| v * w).sum();
        let rg = self.rg(x.0);
        Ok(self.push(
            Matrix::filled(1, 1, s),
            Op::WeightedSum {
                input: x.0,
                weights: weights.to_vec(),
            },
            rg,
        ))
    }

    /// Mean squared error of a column vector against `target`.
    pub fn mse(&mut self, x: Var, target: &[f64]) -> Result<Var, NnError> {
        let xv = &self.nodes[x.0].value;
        if xv.cols() != 1 || xv.rows() != target.len() || target.is_empty() {
            return Err(NnError::Index {
                op: "mse",
                rows: xv.rows(),
            });
        }
        let s: f64 = xv
            .data()
            .iter()
            .zip(target)
            .map(|(v, t)| (v - t) * (v - t))
            .sum::<f64>()
            / target.len() as f64;
        let rg = self.rg(x.0);
        Ok(self.push(
            Matrix::filled(1, 1, s),
            Op::Mse {
                input: x.0,
                target: target.to_vec(),
            },
            rg,
        ))
    }

    /// Reverse pass from a `1 × 1` loss node.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NnError> {
        if self.nodes.is_empty() {
            return Err(NnError::EmptyTape);
        }
        let root = self.nodes.get(loss.0).ok_or(NnError::EmptyTape)?;
        if root.value.shape() != (1, 1) {
            return Err(NnError::NonScalarLoss(root.value.shape()));
        }
        if !root.value.data()[0].is_finite() {
            return Err(NnError::NonFinite("loss"));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    if self.rg(*a) {
                        let mut da = Matrix::zeros(av.rows(), av.cols());
                        gemm(1.0, MatRef::normal(&g), MatRef::transposed(bv), 0.0, &mut da);
                        accumulate(&mut grads, *a, da);
                    }
                    if self.rg(*b) {
                        let mut db = Matrix::zeros(bv.rows(), bv.cols());
                        gemm(1.0, MatRef::transposed(av), MatRef::normal(&g), 0.0, &mut db);
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::AddBias(x, bias) => {
                    if self.rg(*bias) {
                        let mut db = Matrix::zeros(1, g.cols());
                        for r in 0..g.rows() {
                            for (d, v) in db.data_mut().iter_mut().zip(g.row(r)) {
                                *d += v;
                            }
                        }
                        accumulate(&mut grads, *bias, db);
                    }
                    if self.rg(*x) {
                        accumulate(&mut grads, *x, g);
                    }
                }
                Op::Add(a, b) => {
                    if self.rg(*a) && self.rg(*b) {
                        accumulate(&mut grads, *a, g.clone());
                        accumulate(&mut grads, *b, g);
                    } else if self.rg(*a) {
                        accumulate(&mut grads, *a, g);
                    } else if self.rg(*b) {
                        accumulate(&mut grads, *b, g);
                    }
                }
                Op::Propagate { input, adj } => {
                    let dx = propagate_plain(&adj.transpose(), &g);
                    accumulate(&mut grads, *input, dx);
                }
                Op::Relu(x) => {
                    let mut dx = g;
                    for (d, y) in dx.data_mut().iter_mut().zip(node.value.data()) {
                        if *y <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Tanh(x) => {
                    let mut dx = g;
                    for (d, y) in dx.data_mut().iter_mut().zip(node.value.data()) {
                        *d *= 1.0 - y * y;
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::ConcatCols(a, b) => {
                    let ac = self.nodes[*a].value.cols();
                    let bc = self.nodes[*b].value.cols();
                    if self.rg(*a) {
                        let mut da = Matrix::zeros(g.rows(), ac);
                        for r in 0..g.rows() {
                            da.row_mut(r).copy_from_slice(&g.row(r)[..ac]);
                        }
                        accumulate(&mut grads, *a, da);
                    }
                    if self.rg(*b) {
                        let mut db = Matrix::zeros(g.rows(), bc);
                        for r in 0..g.rows() {
                            db.row_mut(r).copy_from_slice(&g.row(r)[ac..]);
                        }
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::GatherRows { input, rows } => {
                    let src = &self.nodes[*input].value;
                    let mut dx = Matrix::zeros(src.rows(), src.cols());
                    for (i, &r) in rows.iter().enumerate() {
                        for (d, v) in dx.row_mut(r).iter_mut().zip(g.row(i)) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads, *input, dx);
                }
                Op::ScatterRows { input, rows } => {
                    let mut dx = Matrix::zeros(rows.len(), g.cols());
                    for (i, &r) in rows.iter().enumerate() {
                        dx.row_mut(i).copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *input, dx);
                }
                Op::MeanPoolBlocks { input, block } => {
                    let src = &self.nodes[*input].value;
                    let mut dx = Matrix::zeros(src.rows(), src.cols());
                    let scale = 1.0 / *block as f64;
                    for r in 0..src.rows() {
                        for (d, v) in dx.row_mut(r).iter_mut().zip(g.row(r / block)) {
                            *d = v * scale;
                        }
                    }
                    accumulate(&mut grads, *input, dx);
                }
                Op::WeightedSum { input, weights } => {
                    let up = g.data()[0];
                    let data = weights.iter().map(|w| w * up).collect();
                    let dx = Matrix::from_vec(weights.len(), 1, data)?;
                    accumulate(&mut grads, *input, dx);
                }
                Op::Mse { input, target } => {
                    let up = g.data()[0];
                    let xv = &self.nodes[*input].value;
                    let k = 2.0 * up / target.len() as f64;
                    let data = xv.data().iter().zip(target).map(|(v, t)| k * (v - t)).collect();
                    let dx = Matrix::from_vec(target.len(), 1, data)?;
                    accumulate(&mut grads, *input, dx);
                }
            }
        }
        for g in grads.iter().flatten() {
            if !g.is_finite() {
                return Err(NnError::NonFinite("gradient"));
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], idx: usize, g: Matrix) {
    match &mut grads[idx] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Per-block `adj · x` with each entry's terms summed in ascending order.
pub(crate) fn propagate_sorted(adj: &Matrix, x: &Matrix) -> Matrix {
    let n = adj.rows();
    let cols = x.cols();
    let neighbours: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| adj.get(i, j) != 0.0)
                .map(|j| (j, adj.get(i, j)))
                .collect()
        })
        .collect();
    let mut out = Matrix::zeros(x.rows(), cols);
    let mut terms: Vec<f64> = Vec::with_capacity(n);
    for base in (0..x.rows()).step_by(n) {
        for (i, nb) in neighbours.iter().enumerate() {
            let orow = out.row_mut(base + i);
            match nb.as_slice() {
                [] => {}
                [(j, w)] => {
                    for (o, v) in orow.iter_mut().zip(x.row(base + j)) {
                        *o = w * v;
                    }
                }
                [(j0, w0), (j1, w1)] => {
                    let (r0, r1) = (x.row(base + j0), x.row(base + j1));
                    for c in 0..cols {
                        orow[c] = w0 * r0[c] + w1 * r1[c];
                    }
                }
                [(j0, w0), (j1, w1), (j2, w2)] => {
                    let (r0, r1, r2) = (x.row(base + j0), x.row(base + j1), x.row(base + j2));
                    for c in 0..cols {
                        let (a, b) = min_max(w0 * r0[c], w1 * r1[c]);
                        let (b, d) = min_max(b, w2 * r2[c]);
                        let (a, b) = min_max(a, b);
                        orow[c] = a + b + d;
                    }
                }
                [(j0, w0), (j1, w1), (j2, w2), (j3, w3)] => {
                    let rows = [x.row(base + j0), x.row(base + j1), x.row(base + j2), x.row(base + j3)];
                    for c in 0..cols {
                        let (a, b) = min_max(w0 * rows[0][c], w1 * rows[1][c]);
                        let (d, e) = min_max(w2 * rows[2][c], w3 * rows[3][c]);
                        let (a, d) = min_max(a, d);
                        let (b, e) = min_max(b, e);
                        let (b, d) = min_max(b, d);
                        orow[c] = a + b + d + e;
                    }
                }
                _ => {
                    for c in 0..cols {
                        terms.clear();
                        for &(j, w) in nb {
                            let t = w * x.get(base + j, c);
                            let mut k = terms.len();
                            terms.push(t);
                            while k > 0 && t < terms[k - 1] {
                                terms[k] = terms[k - 1];
                                k -= 1;
                            }
                            terms[k] = t;
                        }
                        let mut acc = terms[0];
                        for t in &terms[1..] {
                            acc += t;
                        }
                        orow[c] = acc;
                    }
                }
            }
        }
    }
    out
}

/// `(min, max)`; two equal values are interchangeable, so the order of the
/// resulting sum does not depend on which input came first.
#[inline(always)]
fn min_max(a: f64, b: f64) -> (f64, f64) {
    if b < a {
        (b, a)
    } else {
        (a, b)
    }
}

fn propagate_plain(adj: &Matrix, x: &Matrix) -> Matrix {
    let n = adj.rows();
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for base in (0..x.rows()).step_by(n) {
        for i in 0..n {
            for j in 0..n {
                let w = adj.get(i, j);
                if w == 0.0 {
                    continue;
                }
                for (o, v) in out.row_mut(base + i).iter_mut().zip(x.row(base + j)) {
                    *o += w * v;
                }
            }
        }
    }
    out
}
