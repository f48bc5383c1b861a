//! Reverse-mode gradient tape.
//!
//! A [`Graph`] is an append-only arena of nodes. Every operation pushes a new
//! node whose parents already exist, so the arena order is a topological
//! order and the backward pass is a single reverse sweep.

use std::collections::HashMap;

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

use super::param::{ParamId, ParamStore, StoreId};
use super::tensor::{argmax, Tensor};
use crate::error::{Error, Result};

/// Probability floor applied inside every logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Affine {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
    },
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRow {
        a: NodeId,
        bias: NodeId,
    },
    Scale(NodeId, f64),
    OneMinus(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Log(NodeId),
    Softmax(NodeId),
    Blend {
        z: NodeId,
        a: NodeId,
        b: NodeId,
    },
    Sum(NodeId),
    Mean(NodeId),
    RowSum(NodeId),
    Gather {
        table: NodeId,
        ids: Vec<usize>,
    },
    Pick {
        a: NodeId,
        idx: Vec<usize>,
    },
    StraightThrough(NodeId),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<(NodeId, StoreId, ParamId)>,
    param_cache: HashMap<(StoreId, ParamId), NodeId>,
}

/// Gradients of a scalar loss with respect to every node that required one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, node: NodeId) -> Option<&[f64]> {
        self.grads.get(node.0).and_then(|g| g.as_deref())
    }
}

fn view(t: &Tensor) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((t.rows(), t.cols()), t.data()).expect("tensor layout")
}

fn view_mut(buf: &mut [f64], rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((rows, cols), buf).expect("gradient layout")
}

/// Output shape with `cols` columns and the same row structure as `like`.
fn rows_like(like: &Tensor, cols: usize) -> Vec<usize> {
    if like.shape().len() <= 1 {
        vec![cols]
    } else {
        vec![like.rows(), cols]
    }
}

fn acc<'a>(lower: &'a mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &'a mut Vec<f64> {
    lower[id.0].get_or_insert_with(|| vec![0.0; len])
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

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].needs_grad)
    }

    /// Constant input; no gradient flows into it.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Free leaf that collects a gradient (used for input-gradient checks).
    pub fn variable(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf bound to a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        let key = (store.id(), id);
        if let Some(&node) = self.param_cache.get(&key) {
            return node;
        }
        let node = self.push(store.value(id).clone(), Op::Leaf, true);
        self.param_cache.insert(key, node);
        self.params.push((node, store.id(), id));
        node
    }

    /// Copy of `a` that blocks gradient flow.
    pub fn detach(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).clone();
        self.input(value)
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() || ta.cols() != tb.cols() {
            return Err(Error::shape(format!(
                "{what}: {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        Ok(())
    }

    /// `x · wᵀ + b` for `x: [B x n]`, `w: [m x n]`, `b: [m]`.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let (tx, tw) = (self.value(x), self.value(w));
        if tw.shape().len() != 2 || tx.cols() != tw.cols() {
            return Err(Error::shape(format!(
                "affine: input {:?} against weights {:?}",
                tx.shape(),
                tw.shape()
            )));
        }
        let (rows, m) = (tx.rows(), tw.rows());
        if let Some(b) = b {
            if self.value(b).len() != m {
                return Err(Error::shape(format!(
                    "affine: bias {:?} for {m} outputs",
                    self.value(b).shape()
                )));
            }
        }
        let mut out = vec![0.0; rows * m];
        general_mat_mul(1.0, &view(tx), &view(tw).t(), 0.0, &mut view_mut(&mut out, rows, m));
        if let Some(b) = b {
            let bias = self.value(b).data();
            for row in out.chunks_mut(m) {
                row.iter_mut().zip(bias).for_each(|(o, b)| *o += b);
            }
        }
        let shape = rows_like(tx, m);
        let needs = self.needs(&[x, w]) || b.is_some_and(|b| self.needs(&[b]));
        Ok(self.push(Tensor::new(shape, out)?, Op::Affine { x, w, b }, needs))
    }

    /// Plain product `a · b` for `a: [B x k]`, `b: [k x n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if tb.shape().len() != 2 || ta.cols() != tb.rows() {
            return Err(Error::shape(format!(
                "matmul: {:?} · {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let (rows, n) = (ta.rows(), tb.cols());
        let mut out = vec![0.0; rows * n];
        general_mat_mul(1.0, &view(ta), &view(tb), 0.0, &mut view_mut(&mut out, rows, n));
        let shape = rows_like(ta, n);
        let needs = self.needs(&[a, b]);
        Ok(self.push(Tensor::new(shape, out)?, Op::MatMul(a, b), needs))
    }

    fn zip_with(
        &mut self,
        a: NodeId,
        b: NodeId,
        what: &str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        self.same_shape(a, b, what)?;
        let ta = self.value(a);
        let data = ta
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let needs = self.needs(&[a, b]);
        Ok(self.push(value, op, needs))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_with(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_with(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_with(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a bias vector to every row.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let ta = self.value(a);
        let tb = self.value(bias);
        if tb.len() != ta.cols() {
            return Err(Error::shape(format!(
                "add_row: bias {:?} for {:?}",
                tb.shape(),
                ta.shape()
            )));
        }
        let cols = ta.cols();
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(cols) {
            row.iter_mut().zip(tb.data()).for_each(|(o, b)| *o += b);
        }
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let needs = self.needs(&[a, bias]);
        Ok(self.push(value, Op::AddRow { a, bias }, needs))
    }

    fn unary(&mut self, a: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let value = self.value(a).map(f);
        let needs = self.needs(&[a]);
        self.push(value, op, needs)
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        self.unary(a, |x| k * x, Op::Scale(a, k))
    }

    pub fn one_minus(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| 1.0 - x, Op::OneMinus(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    /// Natural log with inputs clamped below at [`LOG_FLOOR`].
    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| x.max(LOG_FLOOR).ln(), Op::Log(a))
    }

    /// Row-wise softmax, stabilised by subtracting each row's maximum.
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let value = softmax_rows(self.value(a));
        let needs = self.needs(&[a]);
        self.push(value, Op::Softmax(a), needs)
    }

    /// `(1 - z) ⊙ a + z ⊙ b`.
    pub fn blend(&mut self, z: NodeId, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(z, a, "blend")?;
        self.same_shape(a, b, "blend")?;
        let (tz, ta, tb) = (self.value(z), self.value(a), self.value(b));
        let data = tz
            .data()
            .iter()
            .zip(ta.data().iter().zip(tb.data()))
            .map(|(&z, (&a, &b))| (1.0 - z) * a + z * b)
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let needs = self.needs(&[z, a, b]);
        Ok(self.push(value, Op::Blend { z, a, b }, needs))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let value = Tensor::scalar(self.value(a).sum());
        let needs = self.needs(&[a]);
        self.push(value, Op::Sum(a), needs)
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a);
        let value = Tensor::scalar(t.sum() / t.len().max(1) as f64);
        let needs = self.needs(&[a]);
        self.push(value, Op::Mean(a), needs)
    }

    /// Sum over columns: `[B x n] -> [B x 1]`.
    pub fn row_sum(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a);
        let data: Vec<f64> = (0..t.rows()).map(|r| t.row(r).iter().sum()).collect();
        let value = Tensor::new(vec![data.len(), 1], data).expect("row sums");
        let needs = self.needs(&[a]);
        self.push(value, Op::RowSum(a), needs)
    }

    /// Embedding lookup: row `ids[i]` of `table` becomes output row `i`.
    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let t = self.value(table);
        let (v, e) = (t.rows(), t.cols());
        let mut data = Vec::with_capacity(ids.len() * e);
        for &id in ids {
            if id >= v {
                return Err(Error::InvalidLabel(format!("token id {id} >= {v}")));
            }
            data.extend_from_slice(t.row(id));
        }
        let value = Tensor::matrix(ids.len(), e, data)?;
        let needs = self.needs(&[table]);
        Ok(self.push(
            value,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            needs,
        ))
    }

    /// Selects `a[i, idx[i]]` for every row: `[B x n] -> [B x 1]`.
    pub fn pick(&mut self, a: NodeId, idx: &[usize]) -> Result<NodeId> {
        let t = self.value(a);
        if idx.len() != t.rows() {
            return Err(Error::shape(format!(
                "pick: {} indices for {} rows",
                idx.len(),
                t.rows()
            )));
        }
        let mut data = Vec::with_capacity(idx.len());
        for (r, &i) in idx.iter().enumerate() {
            if i >= t.cols() {
                return Err(Error::InvalidLabel(format!(
                    "index {i} out of range for {} classes",
                    t.cols()
                )));
            }
            data.push(t.get(r, i));
        }
        let value = Tensor::new(vec![idx.len(), 1], data)?;
        let needs = self.needs(&[a]);
        Ok(self.push(
            value,
            Op::Pick {
                a,
                idx: idx.to_vec(),
            },
            needs,
        ))
    }

    /// Forward: one-hot of each row's argmax (lowest index on ties).
    /// Backward: the upstream gradient passes through unchanged.
    pub fn st_onehot(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a);
        let cols = t.cols();
        let mut value = Tensor::zeros(t.shape());
        for (r, best) in t.argmax_rows().into_iter().enumerate() {
            value.data_mut()[r * cols + best] = 1.0;
        }
        let needs = self.needs(&[a]);
        self.push(value, Op::StraightThrough(a), needs)
    }

    /// Forward: `1` where the input is at or above `threshold`, else `0`.
    /// Backward: identity.
    pub fn st_threshold(&mut self, a: NodeId, threshold: f64) -> NodeId {
        let value = self
            .value(a)
            .map(|p| if p >= threshold { 1.0 } else { 0.0 });
        let needs = self.needs(&[a]);
        self.push(value, Op::StraightThrough(a), needs)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let (lower, upper) = grads.split_at_mut(i);
            let Some(gy) = upper[0].as_deref() else {
                continue;
            };
            self.backprop_node(node, gy, lower);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, node: &Node, gy: &[f64], lower: &mut [Option<Vec<f64>>]) {
        let y = &node.value;
        let wants = |id: NodeId| self.nodes[id.0].needs_grad;
        let len = |id: NodeId| self.nodes[id.0].value.len();
        match &node.op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let (rows, m, n) = (tx.rows(), tw.rows(), tw.cols());
                let g = ArrayView2::from_shape((rows, m), gy).expect("grad layout");
                if wants(*x) {
                    let dx = acc(lower, *x, rows * n);
                    general_mat_mul(1.0, &g, &view(tw), 1.0, &mut view_mut(dx, rows, n));
                }
                if wants(*w) {
                    let dw = acc(lower, *w, m * n);
                    general_mat_mul(1.0, &g.t(), &view(tx), 1.0, &mut view_mut(dw, m, n));
                }
                if let Some(b) = b.filter(|b| wants(*b)) {
                    let db = acc(lower, b, m);
                    for row in gy.chunks(m) {
                        db.iter_mut().zip(row).for_each(|(d, g)| *d += g);
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (rows, k, n) = (ta.rows(), ta.cols(), tb.cols());
                let g = ArrayView2::from_shape((rows, n), gy).expect("grad layout");
                if wants(*a) {
                    let da = acc(lower, *a, rows * k);
                    general_mat_mul(1.0, &g, &view(tb).t(), 1.0, &mut view_mut(da, rows, k));
                }
                if wants(*b) {
                    let db = acc(lower, *b, k * n);
                    general_mat_mul(1.0, &view(ta).t(), &g, 1.0, &mut view_mut(db, k, n));
                }
            }
            Op::Add(a, b) => {
                for id in [*a, *b] {
                    if wants(id) {
                        let d = acc(lower, id, gy.len());
                        d.iter_mut().zip(gy).for_each(|(d, g)| *d += g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if wants(*a) {
                    let d = acc(lower, *a, gy.len());
                    d.iter_mut().zip(gy).for_each(|(d, g)| *d += g);
                }
                if wants(*b) {
                    let d = acc(lower, *b, gy.len());
                    d.iter_mut().zip(gy).for_each(|(d, g)| *d -= g);
                }
            }
            Op::Mul(a, b) => {
                for (id, other) in [(*a, *b), (*b, *a)] {
                    if wants(id) {
                        let ov = self.value(other).data();
                        let d = acc(lower, id, gy.len());
                        for ((d, g), o) in d.iter_mut().zip(gy).zip(ov) {
                            *d += g * o;
                        }
                    }
                }
            }
            Op::AddRow { a, bias } => {
                if wants(*a) {
                    let d = acc(lower, *a, gy.len());
                    d.iter_mut().zip(gy).for_each(|(d, g)| *d += g);
                }
                if wants(*bias) {
                    let m = len(*bias);
                    let d = acc(lower, *bias, m);
                    for row in gy.chunks(m) {
                        d.iter_mut().zip(row).for_each(|(d, g)| *d += g);
                    }
                }
            }
            Op::Scale(a, k) => {
                let d = acc(lower, *a, gy.len());
                d.iter_mut().zip(gy).for_each(|(d, g)| *d += k * g);
            }
            Op::OneMinus(a) => {
                let d = acc(lower, *a, gy.len());
                d.iter_mut().zip(gy).for_each(|(d, g)| *d -= g);
            }
            Op::Sigmoid(a) => {
                let d = acc(lower, *a, gy.len());
                for ((d, g), s) in d.iter_mut().zip(gy).zip(y.data()) {
                    *d += g * s * (1.0 - s);
                }
            }
            Op::Tanh(a) => {
                let d = acc(lower, *a, gy.len());
                for ((d, g), t) in d.iter_mut().zip(gy).zip(y.data()) {
                    *d += g * (1.0 - t * t);
                }
            }
            Op::Relu(a) => {
                let d = acc(lower, *a, gy.len());
                for ((d, g), o) in d.iter_mut().zip(gy).zip(y.data()) {
                    if *o > 0.0 {
                        *d += g;
                    }
                }
            }
            Op::Log(a) => {
                let x = self.value(*a).data();
                let d = acc(lower, *a, gy.len());
                for ((d, g), &x) in d.iter_mut().zip(gy).zip(x) {
                    if x > LOG_FLOOR {
                        *d += g / x;
                    }
                }
            }
            Op::Softmax(a) => {
                let cols = y.cols();
                let d = acc(lower, *a, gy.len());
                for ((drow, grow), yrow) in d
                    .chunks_mut(cols)
                    .zip(gy.chunks(cols))
                    .zip(y.data().chunks(cols))
                {
                    let dot: f64 = grow.iter().zip(yrow).map(|(g, y)| g * y).sum();
                    for ((d, g), y) in drow.iter_mut().zip(grow).zip(yrow) {
                        *d += y * (g - dot);
                    }
                }
            }
            Op::Blend { z, a, b } => {
                let (tz, ta, tb) = (self.value(*z), self.value(*a), self.value(*b));
                if wants(*z) {
                    let d = acc(lower, *z, gy.len());
                    for (i, d) in d.iter_mut().enumerate() {
                        *d += gy[i] * (tb.data()[i] - ta.data()[i]);
                    }
                }
                if wants(*a) {
                    let d = acc(lower, *a, gy.len());
                    for (i, d) in d.iter_mut().enumerate() {
                        *d += gy[i] * (1.0 - tz.data()[i]);
                    }
                }
                if wants(*b) {
                    let d = acc(lower, *b, gy.len());
                    for (i, d) in d.iter_mut().enumerate() {
                        *d += gy[i] * tz.data()[i];
                    }
                }
            }
            Op::Sum(a) => {
                let n = len(*a);
                let d = acc(lower, *a, n);
                d.iter_mut().for_each(|d| *d += gy[0]);
            }
            Op::Mean(a) => {
                let n = len(*a);
                let d = acc(lower, *a, n);
                let g = gy[0] / n.max(1) as f64;
                d.iter_mut().for_each(|d| *d += g);
            }
            Op::RowSum(a) => {
                let cols = self.value(*a).cols();
                let d = acc(lower, *a, gy.len() * cols);
                for (drow, g) in d.chunks_mut(cols).zip(gy) {
                    drow.iter_mut().for_each(|d| *d += g);
                }
            }
            Op::Gather { table, ids } => {
                let t = self.value(*table);
                let e = t.cols();
                let d = acc(lower, *table, t.len());
                for (r, &id) in ids.iter().enumerate() {
                    let src = &gy[r * e..(r + 1) * e];
                    d[id * e..(id + 1) * e]
                        .iter_mut()
                        .zip(src)
                        .for_each(|(d, g)| *d += g);
                }
            }
            Op::Pick { a, idx } => {
                let ta = self.value(*a);
                let cols = ta.cols();
                let d = acc(lower, *a, ta.len());
                for (r, &i) in idx.iter().enumerate() {
                    d[r * cols + i] += gy[r];
                }
            }
            Op::StraightThrough(a) => {
                let d = acc(lower, *a, gy.len());
                d.iter_mut().zip(gy).for_each(|(d, g)| *d += g);
            }
        }
    }

    /// Runs [`Graph::backward`] and accumulates the parameter gradients into
    /// every given store.
    pub fn backward_into(&self, loss: NodeId, stores: &mut [&mut ParamStore]) -> Result<()> {
        let grads = self.backward(loss)?;
        for store in stores.iter_mut() {
            store.accumulate(self, &grads);
        }
        Ok(())
    }

    pub(crate) fn param_nodes(&self) -> &[(NodeId, StoreId, ParamId)] {
        &self.params
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_rows(t: &Tensor) -> Tensor {
    let cols = t.cols();
    let mut data = t.data().to_vec();
    for row in data.chunks_mut(cols) {
        let max = row[argmax(row)];
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    Tensor::new(t.shape().to_vec(), data).expect("softmax keeps shape")
}
