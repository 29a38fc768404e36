//! Reverse-mode gradient accumulation over a recorded computation.
//!
//! Each operation is evaluated eagerly and appended to the tape; node indices
//! grow in topological order, so the backward sweep is a single reverse pass.
//! The kernel set is exactly what the forecasting model needs: matrix-vector
//! products, element-wise arithmetic, the usual activations, a numerically
//! stable softmax, concatenation/slicing, reductions, and a weighted sum of
//! vectors used by the attention context.

use crate::error::NumError;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    fn len(self) -> usize {
        match self {
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }
}

#[derive(Debug)]
enum Op<S> {
    Leaf { requires_grad: bool },
    MatVec(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, S),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Abs(NodeId),
    Softmax(NodeId),
    Slice { src: NodeId, start: usize },
    Concat(Vec<NodeId>),
    Sum(NodeId),
    Mean(NodeId),
    WeightedSum { weights: NodeId, terms: Vec<NodeId> },
}

struct Node<S> {
    value: Vec<S>,
    shape: Shape,
    op: Op<S>,
}

/// Recorded computation with eager forward evaluation.
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

/// Per-node gradient buffers produced by [`Tape::backward`].
pub struct Gradients<S> {
    grads: Vec<Option<Vec<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, id: NodeId) -> Option<&[S]> {
        self.grads[id.0].as_deref()
    }
}

/// Numerically stable softmax: shifts by the maximum before exponentiation.
///
/// Output entries lie in `(0, 1]` and sum to 1. Errors on non-finite input.
pub fn stable_softmax<S: Scalar>(v: &[S]) -> Result<Vec<S>, NumError> {
    if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
        return Err(NumError::NonFinite { op: "softmax" });
    }
    Ok(softmax_unchecked(v))
}

fn softmax_unchecked<S: Scalar>(v: &[S]) -> Vec<S> {
    let max = v.iter().cloned().fold(v[0], S::max);
    let mut out: Vec<S> = v.iter().map(|&x| (x - max).exp()).collect();
    let total: S = out.iter().cloned().sum();
    for o in out.iter_mut() {
        *o = *o / total;
    }
    out
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[S] {
        &self.nodes[id.0].value
    }

    pub fn value_len(&self, id: NodeId) -> usize {
        self.nodes[id.0].shape.len()
    }

    pub fn is_finite(&self, id: NodeId) -> bool {
        self.nodes[id.0].value.iter().all(|v| v.is_finite())
    }

    fn push(&mut self, value: Vec<S>, shape: Shape, op: Op<S>) -> NodeId {
        debug_assert_eq!(value.len(), shape.len());
        self.nodes.push(Node { value, shape, op });
        NodeId(self.nodes.len() - 1)
    }

    fn vec_shape(&self, id: NodeId, op: &'static str) -> usize {
        match self.nodes[id.0].shape {
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => panic!("{op}: expected vector, got {r}x{c} matrix"),
        }
    }

    /// Constant leaf (no gradient routed to it).
    pub fn leaf(&mut self, data: Vec<S>) -> NodeId {
        let n = data.len();
        self.push(data, Shape::Vector(n), Op::Leaf { requires_grad: false })
    }

    /// Leaf from a tensor, optionally participating in gradients.
    pub fn leaf_tensor(&mut self, t: &Tensor<S>, requires_grad: bool) -> NodeId {
        let shape = match t.shape() {
            [n] => Shape::Vector(*n),
            [r, c] => Shape::Matrix(*r, *c),
            other => panic!("tape leaves must be 1-D or 2-D, got {other:?}"),
        };
        self.push(t.data().to_vec(), shape, Op::Leaf { requires_grad })
    }

    /// `M v` for a matrix leaf `M` and vector `v`.
    pub fn matvec(&mut self, m: NodeId, v: NodeId) -> NodeId {
        let (rows, cols) = match self.nodes[m.0].shape {
            Shape::Matrix(r, c) => (r, c),
            Shape::Vector(n) => panic!("matvec: lhs must be a matrix, got vector of {n}"),
        };
        let vn = self.vec_shape(v, "matvec");
        assert_eq!(cols, vn, "matvec: {rows}x{cols} incompatible with vector {vn}");
        let mdata = &self.nodes[m.0].value;
        let vdata = &self.nodes[v.0].value;
        let mut out = vec![S::zero(); rows];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &mdata[i * cols..(i + 1) * cols];
            let mut acc = S::zero();
            for (a, b) in row.iter().zip(vdata) {
                acc += *a * *b;
            }
            *o = acc;
        }
        self.push(out, Shape::Vector(rows), Op::MatVec(m, v))
    }

    fn zip2(
        &mut self,
        a: NodeId,
        b: NodeId,
        op_name: &'static str,
        f: impl Fn(S, S) -> S,
        op: Op<S>,
    ) -> NodeId {
        let na = self.vec_shape(a, op_name);
        let nb = self.vec_shape(b, op_name);
        assert_eq!(na, nb, "{op_name}: length mismatch {na} vs {nb}");
        let out = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(out, Shape::Vector(na), op)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip2(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip2(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    /// Element-wise (Hadamard) product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip2(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: S) -> NodeId {
        let n = self.vec_shape(a, "scale");
        let out = self.nodes[a.0].value.iter().map(|&x| x * c).collect();
        self.push(out, Shape::Vector(n), Op::Scale(a, c))
    }

    fn map1(&mut self, a: NodeId, op_name: &'static str, f: impl Fn(S) -> S, op: Op<S>) -> NodeId {
        let n = self.vec_shape(a, op_name);
        let out = self.nodes[a.0].value.iter().map(|&x| f(x)).collect();
        self.push(out, Shape::Vector(n), op)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.map1(a, "tanh", |x| x.tanh(), Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.map1(a, "sigmoid", |x| S::one() / (S::one() + (-x).exp()), Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.map1(a, "relu", |x| if x > S::zero() { x } else { S::zero() }, Op::Relu(a))
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        self.map1(a, "abs", |x| x.abs(), Op::Abs(a))
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let n = self.vec_shape(a, "softmax");
        let out = softmax_unchecked(&self.nodes[a.0].value);
        self.push(out, Shape::Vector(n), Op::Softmax(a))
    }

    /// Contiguous sub-vector `[start, start + len)`.
    pub fn slice(&mut self, src: NodeId, start: usize, len: usize) -> NodeId {
        let n = self.vec_shape(src, "slice");
        assert!(start + len <= n, "slice [{start}, {}) out of bounds {n}", start + len);
        let out = self.nodes[src.0].value[start..start + len].to_vec();
        self.push(out, Shape::Vector(len), Op::Slice { src, start })
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat: no parts");
        let total: usize = parts.iter().map(|&p| self.vec_shape(p, "concat")).sum();
        let mut out = Vec::with_capacity(total);
        for &p in parts {
            out.extend_from_slice(&self.nodes[p.0].value);
        }
        self.push(out, Shape::Vector(total), Op::Concat(parts.to_vec()))
    }

    pub fn concat2(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.concat(&[a, b])
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.vec_shape(a, "sum");
        let total: S = self.nodes[a.0].value.iter().cloned().sum();
        self.push(vec![total], Shape::Vector(1), Op::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let n = self.vec_shape(a, "mean");
        let total: S = self.nodes[a.0].value.iter().cloned().sum();
        let m = total / S::from_f64(n as f64);
        self.push(vec![m], Shape::Vector(1), Op::Mean(a))
    }

    /// `sum_k weights[k] * terms[k]` where every term is a vector of equal
    /// length. Gradients flow into both the weights and the terms.
    pub fn weighted_sum(&mut self, weights: NodeId, terms: &[NodeId]) -> NodeId {
        let k = self.vec_shape(weights, "weighted_sum");
        assert_eq!(k, terms.len(), "weighted_sum: {k} weights for {} terms", terms.len());
        assert!(!terms.is_empty(), "weighted_sum: no terms");
        let d = self.vec_shape(terms[0], "weighted_sum");
        let mut out = vec![S::zero(); d];
        for (idx, &t) in terms.iter().enumerate() {
            let w = self.nodes[weights.0].value[idx];
            let tv = &self.nodes[t.0].value;
            assert_eq!(tv.len(), d, "weighted_sum: term {idx} length mismatch");
            for (o, &x) in out.iter_mut().zip(tv) {
                *o += w * x;
            }
        }
        self.push(out, Shape::Vector(d), Op::WeightedSum { weights, terms: terms.to_vec() })
    }

    /// Reverse sweep seeding the (scalar) root with 1.
    pub fn backward(&self, root: NodeId) -> Gradients<S> {
        assert_eq!(self.nodes[root.0].shape.len(), 1, "backward root must be a scalar");
        let mut grads: Vec<Option<Vec<S>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![S::one()]);

        for i in (0..=root.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, i: usize, g: &[S], grads: &mut [Option<Vec<S>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf { .. } => {}
            Op::MatVec(m, v) => {
                let (rows, cols) = match self.nodes[m.0].shape {
                    Shape::Matrix(r, c) => (r, c),
                    _ => unreachable!(),
                };
                let mdata = &self.nodes[m.0].value;
                let vdata = &self.nodes[v.0].value;
                if self.requires(*m) {
                    let gm = acc_buf(grads, m.0, rows * cols);
                    for i in 0..rows {
                        let gi = g[i];
                        let row = &mut gm[i * cols..(i + 1) * cols];
                        for (gmj, &vj) in row.iter_mut().zip(vdata) {
                            *gmj += gi * vj;
                        }
                    }
                }
                if self.requires(*v) {
                    let gv = acc_buf(grads, v.0, cols);
                    for i in 0..rows {
                        let gi = g[i];
                        let row = &mdata[i * cols..(i + 1) * cols];
                        for (gvj, &mij) in gv.iter_mut().zip(row) {
                            *gvj += gi * mij;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                self.acc_into(grads, *a, g, |gi, _| gi);
                self.acc_into(grads, *b, g, |gi, _| gi);
            }
            Op::Sub(a, b) => {
                self.acc_into(grads, *a, g, |gi, _| gi);
                self.acc_into(grads, *b, g, |gi, _| -gi);
            }
            Op::Mul(a, b) => {
                let bv: &[S] = &self.nodes[b.0].value;
                let av: &[S] = &self.nodes[a.0].value;
                if self.requires(*a) {
                    let ga = acc_buf(grads, a.0, g.len());
                    for ((o, &gi), &bi) in ga.iter_mut().zip(g).zip(bv) {
                        *o += gi * bi;
                    }
                }
                if self.requires(*b) {
                    let gb = acc_buf(grads, b.0, g.len());
                    for ((o, &gi), &ai) in gb.iter_mut().zip(g).zip(av) {
                        *o += gi * ai;
                    }
                }
            }
            Op::Scale(a, c) => {
                let c = *c;
                self.acc_into(grads, *a, g, move |gi, _| gi * c);
            }
            Op::Tanh(a) => {
                let y = &node.value;
                if self.requires(*a) {
                    let ga = acc_buf(grads, a.0, g.len());
                    for ((o, &gi), &yi) in ga.iter_mut().zip(g).zip(y) {
                        *o += gi * (S::one() - yi * yi);
                    }
                }
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                if self.requires(*a) {
                    let ga = acc_buf(grads, a.0, g.len());
                    for ((o, &gi), &yi) in ga.iter_mut().zip(g).zip(y) {
                        *o += gi * yi * (S::one() - yi);
                    }
                }
            }
            Op::Relu(a) => {
                let x: &[S] = &self.nodes[a.0].value;
                if self.requires(*a) {
                    let ga = acc_buf(grads, a.0, g.len());
                    for ((o, &gi), &xi) in ga.iter_mut().zip(g).zip(x) {
                        if xi > S::zero() {
                            *o += gi;
                        }
                    }
                }
            }
            Op::Abs(a) => {
                let x: &[S] = &self.nodes[a.0].value;
                if self.requires(*a) {
                    let ga = acc_buf(grads, a.0, g.len());
                    for ((o, &gi), &xi) in ga.iter_mut().zip(g).zip(x) {
                        *o += gi * sign(xi);
                    }
                }
            }
            Op::Softmax(a) => {
                // dx_i = y_i * (g_i - sum_j g_j y_j)
                let y = &node.value;
                if self.requires(*a) {
                    let mut dot = S::zero();
                    for (&gi, &yi) in g.iter().zip(y) {
                        dot += gi * yi;
                    }
                    let ga = acc_buf(grads, a.0, g.len());
                    for ((o, &gi), &yi) in ga.iter_mut().zip(g).zip(y) {
                        *o += yi * (gi - dot);
                    }
                }
            }
            Op::Slice { src, start } => {
                if self.requires(*src) {
                    let n = self.nodes[src.0].shape.len();
                    let gs = acc_buf(grads, src.0, n);
                    for (o, &gi) in gs[*start..*start + g.len()].iter_mut().zip(g) {
                        *o += gi;
                    }
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p.0].shape.len();
                    if self.requires(p) {
                        let gp = acc_buf(grads, p.0, len);
                        for (o, &gi) in gp.iter_mut().zip(&g[offset..offset + len]) {
                            *o += gi;
                        }
                    }
                    offset += len;
                }
            }
            Op::Sum(a) => {
                let g0 = g[0];
                self.acc_into(grads, *a, &vec![g0; self.nodes[a.0].shape.len()], |gi, _| gi);
            }
            Op::Mean(a) => {
                let n = self.nodes[a.0].shape.len();
                let g0 = g[0] / S::from_f64(n as f64);
                self.acc_into(grads, *a, &vec![g0; n], |gi, _| gi);
            }
            Op::WeightedSum { weights, terms } => {
                let wv = &self.nodes[weights.0].value;
                if self.requires(*weights) {
                    let gw = acc_buf(grads, weights.0, terms.len());
                    for (k, &t) in terms.iter().enumerate() {
                        let tv = &self.nodes[t.0].value;
                        let mut dot = S::zero();
                        for (&gi, &xi) in g.iter().zip(tv) {
                            dot += gi * xi;
                        }
                        gw[k] += dot;
                    }
                }
                for (k, &t) in terms.iter().enumerate() {
                    if self.requires(t) {
                        let wk = wv[k];
                        let gt = acc_buf(grads, t.0, g.len());
                        for (o, &gi) in gt.iter_mut().zip(g) {
                            *o += wk * gi;
                        }
                    }
                }
            }
        }
    }

    fn acc_into(&self, grads: &mut [Option<Vec<S>>], id: NodeId, g: &[S], f: impl Fn(S, usize) -> S) {
        if !self.requires(id) {
            return;
        }
        let buf = acc_buf(grads, id.0, self.nodes[id.0].shape.len());
        for (i, (o, &gi)) in buf.iter_mut().zip(g).enumerate() {
            *o += f(gi, i);
        }
    }

    /// Whether gradients should be routed into this node or any ancestor.
    ///
    /// Constant leaves cut the flow; every non-leaf node conservatively
    /// receives gradient (its subtree may contain a parameter).
    fn requires(&self, id: NodeId) -> bool {
        !matches!(self.nodes[id.0].op, Op::Leaf { requires_grad: false })
    }
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Tape::new()
    }
}

fn acc_buf<S: Scalar>(grads: &mut [Option<Vec<S>>], idx: usize, len: usize) -> &mut Vec<S> {
    grads[idx].get_or_insert_with(|| vec![S::zero(); len])
}

fn sign<S: Scalar>(x: S) -> S {
    if x > S::zero() {
        S::one()
    } else if x < S::zero() {
        -S::one()
    } else {
        S::zero()
    }
}
