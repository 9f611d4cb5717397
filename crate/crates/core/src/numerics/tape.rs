//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation as a node holding its forward value and
//! the handles of its inputs. [`Tape::backward`] walks the nodes in reverse
//! creation order, which is a valid topological order since a node can only
//! reference nodes created before it; the recorded graph is acyclic by
//! construction.
//!
//! Leaves created with [`Tape::leaf`] accumulate gradients across calls to
//! `backward` until [`Tape::zero_grad`] is called. Constants never receive
//! gradients, and neither does any node computed only from constants.
//!
//! Elementwise binary ops broadcast a `1 × c`, `r × 1` or `1 × 1` operand
//! against the other one.

use alloc::sync::Arc;
use alloc::vec::Vec;

use super::math;
use super::matrix::{gemm, CsrMatrix, Matrix};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug)]
enum UnOp {
    Neg,
    Exp,
    Log,
    Tanh,
    Sigmoid,
    Softplus,
    /// `1 - exp(-exp(x))`
    BpLink,
    Relu,
    Square,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Binary(BinOp, Var, Var),
    Unary(UnOp, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Clamp(Var, f64, f64),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    SpMM(Arc<CsrMatrix>, Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Sum(Var),
    Mean(Var),
    ColSums(Var),
    RowSums(Var),
    RowLogSumExp(Var),
    GatherRows(Var, Vec<usize>),
    Transpose(Var),
    /// Scalar whose gradients w.r.t. the listed inputs were computed with the value.
    ScalarFn(Vec<(Var, Matrix)>),
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
    grad: Option<Matrix>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn broadcast_shape(op: &'static str, a: (usize, usize), b: (usize, usize)) -> Result<(usize, usize)> {
    let dim = |x: usize, y: usize| {
        if x == y {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else if y == 1 {
            Some(x)
        } else {
            None
        }
    };
    match (dim(a.0, b.0), dim(a.1, b.1)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(Error::ShapeMismatch { op, lhs: a, rhs: b }),
    }
}

#[inline]
fn bget(m: &Matrix, r: usize, c: usize) -> f64 {
    let rr = if m.rows() == 1 { 0 } else { r };
    let cc = if m.cols() == 1 { 0 } else { c };
    m[(rr, cc)]
}

/// Sums `full` down to `shape`, undoing a broadcast.
fn reduce_to(full: Matrix, shape: (usize, usize)) -> Matrix {
    if full.shape() == shape {
        return full;
    }
    let mut out = Matrix::zeros(shape.0, shape.1);
    for r in 0..full.rows() {
        let rr = if shape.0 == 1 { 0 } else { r };
        for c in 0..full.cols() {
            let cc = if shape.1 == 1 { 0 } else { c };
            out[(rr, cc)] += full[(r, c)];
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad, grad: None });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf: receives a gradient on [`Tape::backward`].
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Constant leaf: never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Matrix::scalar(value))
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Accumulated gradient of a trainable leaf, `None` before any backward
    /// pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    // ---- elementwise binary (broadcasting) ----

    fn binary(&mut self, op: BinOp, a: Var, b: Var) -> Result<Var> {
        let name = match op {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Div => "div",
        };
        let (va, vb) = (self.value(a), self.value(b));
        let shape = broadcast_shape(name, va.shape(), vb.shape())?;
        let f = |x: f64, y: f64| match op {
            BinOp::Add => x + y,
            BinOp::Sub => x - y,
            BinOp::Mul => x * y,
            BinOp::Div => x / y,
        };
        if let BinOp::Div = op {
            if let Some(&z) = vb.as_slice().iter().find(|&&y| y == 0.0) {
                return Err(Error::Domain { op: "div", value: z });
            }
        }
        let out = if va.shape() == vb.shape() {
            va.zip_map(vb, f)
        } else {
            Matrix::from_fn(shape.0, shape.1, |r, c| f(bget(va, r, c), bget(vb, r, c)))
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Binary(op, a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinOp::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinOp::Div, a, b)
    }

    // ---- elementwise unary ----

    fn unary(&mut self, op: UnOp, a: Var) -> Result<Var> {
        let va = self.value(a);
        let out = match op {
            UnOp::Neg => va.map(|x| -x),
            UnOp::Exp => va.map(math::exp),
            UnOp::Log => {
                if let Some(&bad) = va.as_slice().iter().find(|&&x| x.is_nan() || x <= 0.0) {
                    return Err(Error::Domain { op: "log", value: bad });
                }
                va.map(math::ln)
            }
            UnOp::Tanh => va.map(math::tanh),
            UnOp::Sigmoid => va.map(math::sigmoid),
            UnOp::Softplus => va.map(math::softplus),
            UnOp::BpLink => va.map(|x| -libm::expm1(-math::exp(x))),
            UnOp::Relu => va.map(|x| x.max(0.0)),
            UnOp::Square => va.map(|x| x * x),
        };
        let rg = self.rg(a);
        Ok(self.push(out, Op::Unary(op, a), rg))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(UnOp::Neg, a).expect("neg is total")
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(UnOp::Exp, a).expect("exp is total")
    }

    /// Natural log; every entry must be strictly positive.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(UnOp::Log, a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(UnOp::Tanh, a).expect("tanh is total")
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(UnOp::Sigmoid, a).expect("sigmoid is total")
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(UnOp::Softplus, a).expect("softplus is total")
    }

    /// `1 - exp(-exp(a))`, accurate for very negative `a`.
    pub fn bp_link(&mut self, a: Var) -> Var {
        self.unary(UnOp::BpLink, a).expect("bp_link is total")
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(UnOp::Relu, a).expect("relu is total")
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(UnOp::Square, a).expect("square is total")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x * c);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, c), rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x + c);
        let rg = self.rg(a);
        self.push(out, Op::AddScalar(a), rg)
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(a).map(|x| x.max(lo).min(hi));
        let rg = self.rg(a);
        self.push(out, Op::Clamp(a, lo, hi), rg)
    }

    // ---- products ----

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul_t(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMulT(a, b), rg))
    }

    /// Sparse-constant times dense: gradient flows only into `b`.
    pub fn spmm(&mut self, s: &Arc<CsrMatrix>, b: Var) -> Result<Var> {
        let out = s.matmul_dense(self.value(b))?;
        let rg = self.rg(b);
        Ok(self.push(out, Op::SpMM(Arc::clone(s), b), rg))
    }

    // ---- structure ----

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let values: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Matrix::concat_cols(&values)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let values: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Matrix::concat_rows(&values)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if start > end || end > c {
            return Err(Error::ShapeMismatch { op: "slice_cols", lhs: (r, c), rhs: (start, end) });
        }
        let out = self.value(a).slice_cols(start, end);
        let rg = self.rg(a);
        Ok(self.push(out, Op::SliceCols(a, start), rg))
    }

    /// Rows `start..end`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if start > end || end > r {
            return Err(Error::ShapeMismatch { op: "slice_rows", lhs: (r, c), rhs: (start, end) });
        }
        let out = self.value(a).slice_rows(start, end);
        let rg = self.rg(a);
        Ok(self.push(out, Op::SliceRows(a, start), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(out, Op::Transpose(a), rg)
    }

    /// Rows of `a` picked by `idx` (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let va = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= va.rows()) {
            return Err(Error::IndexOutOfRange { index: bad, bound: va.rows() });
        }
        let mut data = Vec::with_capacity(idx.len() * va.cols());
        for &i in idx {
            data.extend_from_slice(va.row(i));
        }
        let out = Matrix::from_vec(idx.len(), va.cols(), data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::GatherRows(a, idx.to_vec()), rg))
    }

    // ---- reductions ----

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Matrix::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(out, Op::Sum(a), rg)
    }

    /// Scalar `value` of `a` computed off-tape, with `grad` = d value / d a.
    pub fn scalar_fn(&mut self, a: Var, value: f64, grad: Matrix) -> Result<Var> {
        if grad.shape() != self.shape(a) {
            return Err(Error::ShapeMismatch { op: "scalar_fn", lhs: self.shape(a), rhs: grad.shape() });
        }
        Ok(self.scalar_with_grads(value, alloc::vec![(a, grad)]))
    }

    /// Scalar `value` with `grads[k].1` = d value / d `grads[k].0`.
    pub fn scalar_with_grads(&mut self, value: f64, grads: Vec<(Var, Matrix)>) -> Var {
        let grads: Vec<(Var, Matrix)> = grads.into_iter().filter(|(v, _)| self.rg(*v)).collect();
        let rg = !grads.is_empty();
        self.push(Matrix::scalar(value), Op::ScalarFn(grads), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = Matrix::scalar(if v.is_empty() { 0.0 } else { v.sum() / v.len() as f64 });
        let rg = self.rg(a);
        self.push(out, Op::Mean(a), rg)
    }

    /// Sum over rows: `r × c → 1 × c`.
    pub fn col_sums(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let mut out = Matrix::zeros(1, v.cols());
        for r in 0..v.rows() {
            for (o, x) in out.as_mut_slice().iter_mut().zip(v.row(r)) {
                *o += x;
            }
        }
        let rg = self.rg(a);
        self.push(out, Op::ColSums(a), rg)
    }

    /// Sum over columns: `r × c → r × 1`.
    pub fn row_sums(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = Matrix::from_fn(v.rows(), 1, |r, _| v.row(r).iter().sum());
        let rg = self.rg(a);
        self.push(out, Op::RowSums(a), rg)
    }

    /// Per-row `ln Σ_c exp(a[r, c])`: `r × c → r × 1`.
    pub fn row_logsumexp(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = Matrix::from_fn(v.rows(), 1, |r, _| math::log_sum_exp(v.row(r)));
        let rg = self.rg(a);
        self.push(out, Op::RowLogSumExp(a), rg)
    }

    // ---- backward ----

    /// Accumulates `∂root/∂leaf` into every trainable leaf reachable from
    /// `root`. `root` must be `1 × 1`.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let Some(adj) = self.propagate(root, 0)? else { return Ok(()) };
        for (i, g) in adj.into_iter().enumerate() {
            let Some(g) = g else { continue };
            let node = &mut self.nodes[i];
            debug_assert!(matches!(node.op, Op::Leaf));
            match &mut node.grad {
                Some(acc) => acc.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    /// Backpropagates scalar `root` through the nodes recorded since `mark`,
    /// then drops those nodes. Returns the adjoints reaching nodes before
    /// `mark`, ready for [`Tape::scalar_with_grads`]. Trainable leaves created
    /// after `mark` get nothing.
    pub fn backward_segment(&mut self, root: Var, mark: usize) -> Result<Vec<(Var, Matrix)>> {
        if root.0 < mark {
            return Err(Error::IndexOutOfRange { index: root.0, bound: mark });
        }
        let out = match self.propagate(root, mark)? {
            Some(adj) => adj.into_iter().take(mark).enumerate().filter_map(|(i, g)| Some((Var(i), g?))).collect(),
            None => Vec::new(),
        };
        self.nodes.truncate(mark);
        Ok(out)
    }

    /// Adjoints of `root` for nodes `stop..=root`, plus whatever flowed into
    /// earlier nodes and trainable leaves. `None` when `root` needs no gradient.
    fn propagate(&self, root: Var, stop: usize) -> Result<Option<Vec<Option<Matrix>>>> {
        let (rows, cols) = self.shape(root);
        if (rows, cols) != (1, 1) {
            return Err(Error::NonScalarRoot { rows, cols });
        }
        if !self.rg(root) {
            return Ok(None);
        }
        let mut adj: Vec<Option<Matrix>> = (0..=root.0).map(|_| None).collect();
        adj[root.0] = Some(Matrix::scalar(1.0));

        for i in (stop..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let y = &node.value;
            let mut contribs: Vec<(Var, Matrix)> = Vec::new();
            match &node.op {
                Op::Leaf => {
                    adj[i] = Some(g);
                    continue;
                }
                Op::Binary(op, a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let (ra, rb) = (self.rg(*a), self.rg(*b));
                    let (rr, cc) = g.shape();
                    let full = |f: &dyn Fn(usize, usize, f64) -> f64| {
                        Matrix::from_fn(rr, cc, |r, c| f(r, c, g[(r, c)]))
                    };
                    match op {
                        BinOp::Add => {
                            if ra {
                                contribs.push((*a, reduce_to(g.clone(), va.shape())));
                            }
                            if rb {
                                contribs.push((*b, reduce_to(g.clone(), vb.shape())));
                            }
                        }
                        BinOp::Sub => {
                            if ra {
                                contribs.push((*a, reduce_to(g.clone(), va.shape())));
                            }
                            if rb {
                                contribs.push((*b, reduce_to(g.map(|x| -x), vb.shape())));
                            }
                        }
                        BinOp::Mul => {
                            if ra {
                                let ga = full(&|r, c, gv| gv * bget(vb, r, c));
                                contribs.push((*a, reduce_to(ga, va.shape())));
                            }
                            if rb {
                                let gb = full(&|r, c, gv| gv * bget(va, r, c));
                                contribs.push((*b, reduce_to(gb, vb.shape())));
                            }
                        }
                        BinOp::Div => {
                            if ra {
                                let ga = full(&|r, c, gv| gv / bget(vb, r, c));
                                contribs.push((*a, reduce_to(ga, va.shape())));
                            }
                            if rb {
                                let gb = full(&|r, c, gv| {
                                    let d = bget(vb, r, c);
                                    -gv * bget(va, r, c) / (d * d)
                                });
                                contribs.push((*b, reduce_to(gb, vb.shape())));
                            }
                        }
                    }
                }
                Op::Unary(op, a) => {
                    let x = self.value(*a);
                    let ga = match op {
                        UnOp::Neg => g.map(|v| -v),
                        UnOp::Exp => g.zip_map(y, |gv, yv| gv * yv),
                        UnOp::Log => g.zip_map(x, |gv, xv| gv / xv),
                        UnOp::Tanh => g.zip_map(y, |gv, yv| gv * (1.0 - yv * yv)),
                        UnOp::Sigmoid => g.zip_map(y, |gv, yv| gv * yv * (1.0 - yv)),
                        UnOp::Softplus => g.zip_map(x, |gv, xv| gv * math::sigmoid(xv)),
                        UnOp::BpLink => g.zip_map(x, |gv, xv| gv * math::exp(xv - math::exp(xv))),
                        UnOp::Relu => g.zip_map(x, |gv, xv| if xv > 0.0 { gv } else { 0.0 }),
                        UnOp::Square => g.zip_map(x, |gv, xv| 2.0 * gv * xv),
                    };
                    contribs.push((*a, ga));
                }
                Op::Scale(a, c) => contribs.push((*a, g.map(|v| v * c))),
                Op::AddScalar(a) => contribs.push((*a, g)),
                Op::ScalarFn(grads) => {
                    let gv = g.item();
                    contribs.extend(grads.iter().map(|(a, m)| (*a, m.map(|v| v * gv))));
                }
                Op::Clamp(a, lo, hi) => {
                    let x = self.value(*a);
                    contribs.push((*a, g.zip_map(x, |gv, xv| if xv >= *lo && xv <= *hi { gv } else { 0.0 })));
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    if self.rg(*a) {
                        let mut ga = Matrix::zeros(va.rows(), va.cols());
                        gemm(&g, false, vb, true, &mut ga, 0.0);
                        contribs.push((*a, ga));
                    }
                    if self.rg(*b) {
                        let mut gb = Matrix::zeros(vb.rows(), vb.cols());
                        gemm(va, true, &g, false, &mut gb, 0.0);
                        contribs.push((*b, gb));
                    }
                }
                Op::MatMulT(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    if self.rg(*a) {
                        let mut ga = Matrix::zeros(va.rows(), va.cols());
                        gemm(&g, false, vb, false, &mut ga, 0.0);
                        contribs.push((*a, ga));
                    }
                    if self.rg(*b) {
                        let mut gb = Matrix::zeros(vb.rows(), vb.cols());
                        gemm(&g, true, va, false, &mut gb, 0.0);
                        contribs.push((*b, gb));
                    }
                }
                Op::SpMM(s, b) => {
                    contribs.push((*b, s.t_matmul_dense(&g)?));
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.shape(p).1;
                        if self.rg(p) {
                            contribs.push((p, g.slice_cols(offset, offset + w)));
                        }
                        offset += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let h = self.shape(p).0;
                        if self.rg(p) {
                            contribs.push((p, g.slice_rows(offset, offset + h)));
                        }
                        offset += h;
                    }
                }
                Op::SliceCols(a, start) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Matrix::zeros(r, c);
                    for row in 0..r {
                        ga.row_mut(row)[*start..*start + g.cols()].copy_from_slice(g.row(row));
                    }
                    contribs.push((*a, ga));
                }
                Op::SliceRows(a, start) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Matrix::zeros(r, c);
                    for row in 0..g.rows() {
                        ga.row_mut(start + row).copy_from_slice(g.row(row));
                    }
                    contribs.push((*a, ga));
                }
                Op::Transpose(a) => contribs.push((*a, g.transpose())),
                Op::GatherRows(a, idx) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Matrix::zeros(r, c);
                    for (k, &i) in idx.iter().enumerate() {
                        for (o, x) in ga.row_mut(i).iter_mut().zip(g.row(k)) {
                            *o += x;
                        }
                    }
                    contribs.push((*a, ga));
                }
                Op::Sum(a) => {
                    let (r, c) = self.shape(*a);
                    contribs.push((*a, Matrix::filled(r, c, g.item())));
                }
                Op::Mean(a) => {
                    let (r, c) = self.shape(*a);
                    let n = (r * c).max(1) as f64;
                    contribs.push((*a, Matrix::filled(r, c, g.item() / n)));
                }
                Op::ColSums(a) => {
                    let (r, c) = self.shape(*a);
                    contribs.push((*a, Matrix::from_fn(r, c, |_, col| g[(0, col)])));
                }
                Op::RowSums(a) => {
                    let (r, c) = self.shape(*a);
                    contribs.push((*a, Matrix::from_fn(r, c, |row, _| g[(row, 0)])));
                }
                Op::RowLogSumExp(a) => {
                    let x = self.value(*a);
                    let ga = Matrix::from_fn(x.rows(), x.cols(), |r, c| g[(r, 0)] * math::exp(x[(r, c)] - y[(r, 0)]));
                    contribs.push((*a, ga));
                }
            }
            for (v, m) in contribs {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut adj[v.0] {
                    Some(acc) => acc.add_assign(&m),
                    slot @ None => *slot = Some(m),
                }
            }
        }
        Ok(Some(adj))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_sum_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::scalar(3.0));
        let y = t.mul(x, x).unwrap();
        let s = t.sum(y);
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).unwrap().item(), 6.0);
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::scalar(0.0));
        let y = t.sigmoid(x);
        assert_eq!(t.value(y).item(), 0.5);
        let s = t.sum(y);
        t.backward(s).unwrap();
        // sigma'(0) = sigma(0)(1 - sigma(0)), evaluated independently.
        let expected = math::sigmoid(0.0) * (1.0 - math::sigmoid(0.0));
        assert_eq!(t.grad(x).unwrap().item(), expected);
        assert_eq!(expected, 0.25);
    }

    #[test]
    fn matmul_gradients_by_hand() {
        let mut t = Tape::new();
        let a = t.leaf(Matrix::from_rows(&[[1.0, 2.0]]));
        let b = t.leaf(Matrix::from_rows(&[[3.0], [4.0]]));
        let c = t.matmul(a, b).unwrap();
        let s = t.sum(c);
        t.backward(s).unwrap();
        assert_eq!(t.grad(a).unwrap(), &Matrix::from_rows(&[[3.0, 4.0]]));
        assert_eq!(t.grad(b).unwrap(), &Matrix::from_rows(&[[1.0], [2.0]]));
    }

    #[test]
    fn backward_accumulates_until_zeroed() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::scalar(3.0));
        let y = t.square(x);
        let s = t.sum(y);
        t.backward(s).unwrap();
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).unwrap().item(), 12.0);
        t.zero_grad();
        assert!(t.grad(x).is_none());
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).unwrap().item(), 6.0);
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::zeros(2, 1));
        assert_eq!(t.backward(x), Err(Error::NonScalarRoot { rows: 2, cols: 1 }));
    }

    #[test]
    fn shape_errors_report_both_shapes() {
        let mut t = Tape::new();
        let a = t.leaf(Matrix::zeros(2, 3));
        let b = t.leaf(Matrix::zeros(3, 2));
        assert_eq!(t.add(a, b), Err(Error::ShapeMismatch { op: "add", lhs: (2, 3), rhs: (3, 2) }));
        assert_eq!(t.matmul(a, a), Err(Error::ShapeMismatch { op: "matmul", lhs: (2, 3), rhs: (2, 3) }));
    }

    #[test]
    fn domain_errors() {
        let mut t = Tape::new();
        let a = t.leaf(Matrix::from_rows(&[[1.0, 0.0]]));
        assert!(matches!(t.log(a), Err(Error::Domain { op: "log", .. })));
        let b = t.leaf(Matrix::from_rows(&[[1.0, 2.0]]));
        assert!(matches!(t.div(b, a), Err(Error::Domain { op: "div", .. })));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut t = Tape::new();
        let c = t.constant(Matrix::scalar(2.0));
        let x = t.leaf(Matrix::scalar(5.0));
        let y = t.mul(c, x).unwrap();
        let s = t.sum(y);
        t.backward(s).unwrap();
        assert!(t.grad(c).is_none());
        assert_eq!(t.grad(x).unwrap().item(), 2.0);
    }

    #[test]
    fn broadcast_row_vector_gradient_reduces() {
        let mut t = Tape::new();
        let m = t.leaf(Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]));
        let row = t.leaf(Matrix::from_rows(&[[10.0, 20.0]]));
        let y = t.mul(m, row).unwrap();
        let s = t.sum(y);
        t.backward(s).unwrap();
        assert_eq!(t.grad(row).unwrap(), &Matrix::from_rows(&[[9.0, 12.0]]));
        assert_eq!(t.grad(m).unwrap(), &Matrix::from_rows(&[[10.0, 20.0], [10.0, 20.0], [10.0, 20.0]]));
    }

    #[test]
    fn concat_routes_gradient_slices() {
        let mut t = Tape::new();
        let a = t.leaf(Matrix::from_rows(&[[1.0], [2.0]]));
        let b = t.leaf(Matrix::from_rows(&[[3.0], [4.0]]));
        let c = t.concat_cols(&[a, b]).unwrap();
        assert_eq!(t.value(c), &Matrix::from_rows(&[[1.0, 3.0], [2.0, 4.0]]));
        let w = t.constant(Matrix::from_rows(&[[1.0, 2.0]]));
        let y = t.mul(c, w).unwrap();
        let s = t.sum(y);
        t.backward(s).unwrap();
        assert_eq!(t.grad(a).unwrap(), &Matrix::from_rows(&[[1.0], [1.0]]));
        assert_eq!(t.grad(b).unwrap(), &Matrix::from_rows(&[[2.0], [2.0]]));
    }

    #[test]
    fn spmm_forward_and_backward() {
        let s = Arc::new(CsrMatrix::from_triplets(2, 2, vec![(0, 0, 0.5), (0, 1, 0.5), (1, 0, 0.5), (1, 1, 0.5)]).unwrap());
        let mut t = Tape::new();
        let h = t.leaf(Matrix::identity(2));
        let y = t.spmm(&s, h).unwrap();
        assert_eq!(t.value(y), &Matrix::filled(2, 2, 0.5));
        let q = t.square(y);
        let l = t.sum(q);
        t.backward(l).unwrap();
        // d/dH sum((SH)^2) = 2 Sᵀ S H
        assert_eq!(t.grad(h).unwrap(), &Matrix::filled(2, 2, 1.0));
    }
}
