//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] is an append-only list of nodes. Every operation pushes a node
//! whose parents have strictly smaller indices, so the node order is already a
//! topological order and the graph can never contain a cycle. Leaves are
//! either parameters (gradients tracked) or constants (no gradient).
//!
//! Gradients accumulate: calling [`Graph::backward`] twice adds the second
//! pass onto the first until [`Graph::zero_grad`] is called.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::{matmul_into, matmul_nt_into, matmul_tn_into, Tensor};

/// Norms below this are clamped in [`Graph::l2_normalize`].
pub const NORM_EPS: f64 = 1e-12;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddBias(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    LogSigmoid(Var),
    LogSoftmax(Var, usize),
    Dot(Var, Var),
    RowDot(Var, Var),
    L2Normalize(Var, Vec<f64>),
    Concat(Var, Var),
    Scale(Var, f64),
    Mean(Var),
    Sum(Var),
    GatherRows(Var, Vec<usize>),
    Pick(Var, Vec<usize>),
    Reshape(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Copy of `v`'s current value as a new constant leaf (blocks gradient flow).
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(mismatch("matmul", ta, tb));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; m * n];
        matmul_into(ta.data(), tb.data(), &mut out, m, k, n);
        let value = Tensor::new(vec![m, n], out)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    fn zip_same(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(op, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same("add", a, b, |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same("sub", a, b, |x, y| x - y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    /// Adds a rank-1 bias of length `cols` to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        if tb.rank() != 1 || tb.len() != tx.cols() {
            return Err(mismatch("add_bias", tx, tb));
        }
        let c = tx.cols();
        let mut data = tx.data().to_vec();
        for (i, v) in data.iter_mut().enumerate() {
            *v += tb.data()[i % c];
        }
        let value = Tensor::new(tx.shape().to_vec(), data)?;
        let rg = self.rg(&[x, bias]);
        Ok(self.push(value, Op::AddBias(x, bias), rg))
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(x).map(f);
        let rg = self.rg(&[x]);
        self.push(value, op, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Relu(x), |v| if v <= 0.0 { 0.0 } else { v })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x), math::sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Op::Tanh(x), math::tanh)
    }

    pub fn log_sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::LogSigmoid(x), math::log_sigmoid)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::Scale(x, c), |v| v * c)
    }

    /// Log-softmax along `axis` (0 or 1 for matrices, 0 for vectors).
    ///
    /// The dominant term is factored out and the rest summed through `log1p`,
    /// so a row like `[20, -20]` yields `-log1p(e^-40)` rather than zero.
    pub fn log_softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let tx = self.value(x);
        let (outer, len, stride) = axis_layout(tx, axis).ok_or(Error::ShapeMismatch {
            op: "log_softmax",
            lhs: tx.shape().to_vec(),
            rhs: vec![axis],
        })?;
        let src = tx.data();
        let mut out = vec![0.0; src.len()];
        for lane in 0..outer {
            let base = lane_base(lane, len, stride);
            let at = |j: usize| base + j * stride;
            let mut arg = 0;
            for j in 1..len {
                if src[at(j)] > src[at(arg)] {
                    arg = j;
                }
            }
            let m = src[at(arg)];
            let mut rest = 0.0;
            for j in 0..len {
                if j != arg {
                    rest += math::exp(src[at(j)] - m);
                }
            }
            let lse = math::ln_1p(rest);
            for j in 0..len {
                out[at(j)] = (src[at(j)] - m) - lse;
            }
        }
        let value = Tensor::new(tx.shape().to_vec(), out)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::LogSoftmax(x, axis), rg))
    }

    /// Full inner product of two equally shaped tensors; returns a scalar.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch("dot", ta, tb));
        }
        let s = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).sum();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::scalar(s), Op::Dot(a, b), rg))
    }

    /// Per-row inner products of two `[m, n]` tensors; returns `[m]`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch("row_dot", ta, tb));
        }
        let c = ta.cols();
        let out: Vec<f64> = ta
            .data()
            .chunks(c)
            .zip(tb.data().chunks(c))
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum())
            .collect();
        let value = Tensor::vector(out);
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::RowDot(a, b), rg))
    }

    /// Scales each row (last axis) to unit Euclidean norm.
    pub fn l2_normalize(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let c = tx.cols();
        let mut norms = Vec::with_capacity(tx.rows());
        let mut out = tx.data().to_vec();
        for row in out.chunks_mut(c) {
            let n = math::sqrt(row.iter().map(|v| v * v).sum::<f64>()).max(NORM_EPS);
            row.iter_mut().for_each(|v| *v /= n);
            norms.push(n);
        }
        let value = Tensor::new(tx.shape().to_vec(), out).expect("shape preserved");
        let rg = self.rg(&[x]);
        self.push(value, Op::L2Normalize(x, norms), rg)
    }

    /// Concatenates along the last axis; leading dimensions must agree.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != tb.rank() || ta.shape()[..ta.rank() - 1] != tb.shape()[..tb.rank() - 1] {
            return Err(mismatch("concat", ta, tb));
        }
        let (ca, cb) = (ta.cols(), tb.cols());
        let mut data = Vec::with_capacity(ta.len() + tb.len());
        for (ra, rb) in ta.data().chunks(ca).zip(tb.data().chunks(cb)) {
            data.extend_from_slice(ra);
            data.extend_from_slice(rb);
        }
        let mut shape = ta.shape().to_vec();
        *shape.last_mut().unwrap() = ca + cb;
        let value = Tensor::new(shape, data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Concat(a, b), rg))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(m), Op::Mean(x), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum::<f64>();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Rows `idx` of a matrix, in order; indices may repeat.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 2 || idx.is_empty() || idx.iter().any(|&i| i >= tx.rows()) {
            return Err(Error::ShapeMismatch {
                op: "gather_rows",
                lhs: tx.shape().to_vec(),
                rhs: vec![idx.iter().copied().max().unwrap_or(0), idx.len()],
            });
        }
        let value = tx.select_rows(idx)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::GatherRows(x, idx.to_vec()), rg))
    }

    /// `out[i] = x[i, cols[i]]` for an `[m, n]` matrix; returns `[m]`.
    pub fn pick(&mut self, x: Var, cols: &[usize]) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 2 || cols.len() != tx.rows() || cols.iter().any(|&c| c >= tx.cols()) {
            return Err(Error::ShapeMismatch {
                op: "pick",
                lhs: tx.shape().to_vec(),
                rhs: vec![cols.len()],
            });
        }
        let n = tx.cols();
        let out = cols.iter().enumerate().map(|(i, &c)| tx.data()[i * n + c]).collect();
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::vector(out), Op::Pick(x, cols.to_vec()), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let tx = self.value(x);
        let value = tx.reshape(shape).map_err(|_| Error::ShapeMismatch {
            op: "reshape",
            lhs: tx.shape().to_vec(),
            rhs: shape.to_vec(),
        })?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// Runs the reverse pass from a scalar `loss`, accumulating into the
    /// gradient buffers of every node that requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::NonScalarLoss(self.value(loss).shape().to_vec()));
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        // Upstream gradients of this pass, kept apart from the accumulated
        // buffers so repeated calls add up correctly.
        let mut upstream: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        upstream[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = upstream[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let contributions = self.local_grads(i, &g)?;
            for (parent, pg) in contributions {
                if !self.nodes[parent.0].requires_grad {
                    continue;
                }
                match &mut upstream[parent.0] {
                    Some(acc) => acc.add_assign(&pg)?,
                    slot @ None => *slot = Some(pg),
                }
            }
            match &mut self.nodes[i].grad {
                Some(acc) => acc.add_assign(&g)?,
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn local_grads(&self, i: usize, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let node = &self.nodes[i];
        let y = &node.value;
        let gd = g.data();
        let out = match &node.op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                let mut ga = vec![0.0; m * k];
                let mut gb = vec![0.0; k * n];
                matmul_nt_into(gd, tb.data(), &mut ga, m, n, k);
                matmul_tn_into(ta.data(), gd, &mut gb, m, k, n);
                vec![
                    (*a, Tensor::new(vec![m, k], ga)?),
                    (*b, Tensor::new(vec![k, n], gb)?),
                ]
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|v| -v))],
            Op::AddBias(x, b) => {
                let c = y.cols();
                let mut gb = vec![0.0; c];
                for row in gd.chunks(c) {
                    for (acc, v) in gb.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                vec![(*x, g.clone()), (*b, Tensor::vector(gb))]
            }
            Op::Relu(x) => {
                let tx = self.value(*x);
                let d = tx.data().iter().zip(gd).map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 });
                vec![(*x, Tensor::new(y.shape().to_vec(), d.collect())?)]
            }
            Op::Sigmoid(x) => {
                let d = y.data().iter().zip(gd).map(|(&s, &gv)| gv * s * (1.0 - s));
                vec![(*x, Tensor::new(y.shape().to_vec(), d.collect())?)]
            }
            Op::Tanh(x) => {
                let d = y.data().iter().zip(gd).map(|(&t, &gv)| gv * (1.0 - t * t));
                vec![(*x, Tensor::new(y.shape().to_vec(), d.collect())?)]
            }
            Op::LogSigmoid(x) => {
                let tx = self.value(*x);
                let d = tx.data().iter().zip(gd).map(|(&v, &gv)| gv * math::sigmoid(-v));
                vec![(*x, Tensor::new(y.shape().to_vec(), d.collect())?)]
            }
            Op::LogSoftmax(x, axis) => {
                let (outer, len, stride) = axis_layout(y, *axis).expect("validated in forward");
                let ys = y.data();
                let mut dx = vec![0.0; ys.len()];
                for lane in 0..outer {
                    let base = lane_base(lane, len, stride);
                    let gsum: f64 = (0..len).map(|j| gd[base + j * stride]).sum();
                    for j in 0..len {
                        let at = base + j * stride;
                        dx[at] = gd[at] - math::exp(ys[at]) * gsum;
                    }
                }
                vec![(*x, Tensor::new(y.shape().to_vec(), dx)?)]
            }
            Op::Dot(a, b) => {
                let s = gd[0];
                vec![
                    (*a, self.value(*b).map(|v| v * s)),
                    (*b, self.value(*a).map(|v| v * s)),
                ]
            }
            Op::RowDot(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let c = ta.cols();
                let mut ga = vec![0.0; ta.len()];
                let mut gb = vec![0.0; tb.len()];
                for r in 0..ta.rows() {
                    for j in 0..c {
                        ga[r * c + j] = gd[r] * tb.data()[r * c + j];
                        gb[r * c + j] = gd[r] * ta.data()[r * c + j];
                    }
                }
                vec![
                    (*a, Tensor::new(ta.shape().to_vec(), ga)?),
                    (*b, Tensor::new(tb.shape().to_vec(), gb)?),
                ]
            }
            Op::L2Normalize(x, norms) => {
                let c = y.cols();
                let mut dx = vec![0.0; y.len()];
                for (r, &n) in norms.iter().enumerate() {
                    let yr = &y.data()[r * c..(r + 1) * c];
                    let gr = &gd[r * c..(r + 1) * c];
                    if n <= NORM_EPS {
                        for j in 0..c {
                            dx[r * c + j] = gr[j] / n;
                        }
                        continue;
                    }
                    let proj: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        dx[r * c + j] = (gr[j] - yr[j] * proj) / n;
                    }
                }
                vec![(*x, Tensor::new(y.shape().to_vec(), dx)?)]
            }
            Op::Concat(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (ca, cb) = (ta.cols(), tb.cols());
                let mut ga = Vec::with_capacity(ta.len());
                let mut gb = Vec::with_capacity(tb.len());
                for row in gd.chunks(ca + cb) {
                    ga.extend_from_slice(&row[..ca]);
                    gb.extend_from_slice(&row[ca..]);
                }
                vec![
                    (*a, Tensor::new(ta.shape().to_vec(), ga)?),
                    (*b, Tensor::new(tb.shape().to_vec(), gb)?),
                ]
            }
            Op::Scale(x, c) => vec![(*x, g.map(|v| v * c))],
            Op::Mean(x) => {
                let tx = self.value(*x);
                let s = gd[0] / tx.len() as f64;
                vec![(*x, Tensor::full(tx.shape(), s))]
            }
            Op::Sum(x) => vec![(*x, Tensor::full(self.value(*x).shape(), gd[0]))],
            Op::GatherRows(x, idx) => {
                let tx = self.value(*x);
                let c = tx.cols();
                let mut dx = Tensor::zeros(tx.shape());
                let buf = dx.data_mut();
                for (r, &src) in idx.iter().enumerate() {
                    for j in 0..c {
                        buf[src * c + j] += gd[r * c + j];
                    }
                }
                vec![(*x, dx)]
            }
            Op::Pick(x, cols) => {
                let tx = self.value(*x);
                let n = tx.cols();
                let mut dx = Tensor::zeros(tx.shape());
                let buf = dx.data_mut();
                for (r, &c) in cols.iter().enumerate() {
                    buf[r * n + c] += gd[r];
                }
                vec![(*x, dx)]
            }
            Op::Reshape(x) => vec![(*x, g.reshape(self.value(*x).shape())?)],
        };
        Ok(out)
    }
}

/// `(number of lanes, lane length, element stride)` for a reduction along `axis`.
fn axis_layout(t: &Tensor, axis: usize) -> Option<(usize, usize, usize)> {
    match (t.rank(), axis) {
        (1, 0) => Some((1, t.len(), 1)),
        (2, 0) => Some((t.shape()[1], t.shape()[0], t.shape()[1])),
        (2, 1) => Some((t.shape()[0], t.shape()[1], 1)),
        _ => None,
    }
}

fn lane_base(lane: usize, len: usize, stride: usize) -> usize {
    if stride == 1 {
        lane * len
    } else {
        lane
    }
}
