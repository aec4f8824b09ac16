//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is a tape of primitive-operation records built during a
//! forward pass and replayed in reverse by [`Graph::backward`]. Graphs are
//! short-lived: one per training step, dropped afterwards.
//!
//! Primitives validate operand shapes, and every output (and every
//! accumulated gradient) is checked for NaN/Inf — a non-finite value aborts
//! the step with [`Error::NonFinite`] instead of propagating.
//!
//! Reductions run sequentially so results are bit-identical for a fixed
//! graph; matmul kernels may split over output rows (each row is a pure
//! sequential dot product, so the split does not change results).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Variance floor inside row layer normalization.
pub const LAYERNORM_EPS: f64 = 1e-5;

/// Below this many output elements a matmul stays on one thread.
const PAR_THRESHOLD: usize = 16 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// `[.., n, k] x [k, m]`, leading dims of the lhs are folded.
    Matmul(NodeId, NodeId),
    /// `[b, n, k] x [b, k, m]`, batch-wise contraction.
    Bmm(NodeId, NodeId),
    /// Swap the last two dims.
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    Gelu(NodeId),
    Square(NodeId),
    Sqrt(NodeId),
    SoftmaxRows(NodeId),
    LayernormRows(NodeId),
    ConcatLast(Vec<NodeId>),
    SliceLast { input: NodeId, start: usize, len: usize },
    Sum(NodeId),
    Mean(NodeId),
    L2Norm(NodeId),
    Reshape(NodeId),
    /// Mean over rows of the softmax cross-entropy between logits and a
    /// target distribution (one-hot in practice). Numerically stable fused
    /// form; adjoint w.r.t. logits is `(softmax - target) / rows`.
    CrossEntropyMean(NodeId, NodeId),
    /// Test fixture: forward already applied; backpropagates `backward`.
    ScaleSplit { input: NodeId, backward: f64 },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Matmul(..) => "matmul",
            Op::Bmm(..) => "bmm",
            Op::Transpose(..) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Relu(..) => "relu",
            Op::Gelu(..) => "gelu",
            Op::Square(..) => "square",
            Op::Sqrt(..) => "sqrt",
            Op::SoftmaxRows(..) => "softmax-rows",
            Op::LayernormRows(..) => "layernorm-rows",
            Op::ConcatLast(..) => "concat-last-dim",
            Op::SliceLast { .. } => "slice",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::L2Norm(..) => "l2norm",
            Op::Reshape(..) => "reshape",
            Op::CrossEntropyMean(..) => "softmax-cross-entropy",
            Op::ScaleSplit { .. } => "scale-split",
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
    /// True when some requires-grad leaf feeds this node.
    needs_grad: bool,
}

/// Gradients of one backward pass, indexed by graph node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// Register an input tensor. Gradients are accumulated for it only when
    /// `requires_grad` is set.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::non_finite("leaf"));
        }
        self.push(Op::Leaf, value, requires_grad)
    }

    /// A leaf that never receives gradients.
    pub fn constant(&mut self, value: Tensor) -> Result<NodeId> {
        self.leaf(value, false)
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::non_finite(op.name()));
        }
        self.nodes.push(Node { op, value, needs_grad });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    // ── primitives ──────────────────────────────────────────────────────

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if tb.rank() != 2 || ta.rank() < 2 || ta.last_dim() != tb.shape()[0] {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", ta.shape(), tb.shape()),
            ));
        }
        let k = tb.shape()[0];
        let m = tb.shape()[1];
        let rows = ta.numel() / k;
        let out = matmul_kernel(ta.data(), tb.data(), rows, k, m);
        let mut shape = ta.shape().to_vec();
        *shape.last_mut().unwrap() = m;
        let needs = self.needs(a) || self.needs(b);
        self.push(Op::Matmul(a, b), Tensor::new(shape, out)?, needs)
    }

    pub fn bmm(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        let ok = ta.rank() == 3
            && tb.rank() == 3
            && ta.shape()[0] == tb.shape()[0]
            && ta.shape()[2] == tb.shape()[1];
        if !ok {
            return Err(Error::shape("bmm", format!("{:?} x {:?}", ta.shape(), tb.shape())));
        }
        let (bs, n, k) = (ta.shape()[0], ta.shape()[1], ta.shape()[2]);
        let m = tb.shape()[2];
        let out = bmm_kernel(ta.data(), tb.data(), bs, n, k, m);
        let needs = self.needs(a) || self.needs(b);
        self.push(Op::Bmm(a, b), Tensor::new(vec![bs, n, m], out)?, needs)
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let ta = self.value(a);
        if ta.rank() < 2 {
            return Err(Error::shape("transpose", format!("{:?}", ta.shape())));
        }
        let (out, shape) = transpose_kernel(ta);
        let needs = self.needs(a);
        self.push(Op::Transpose(a), Tensor::new(shape, out)?, needs)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_broadcast(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape("sub", format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let out: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(x, y)| x - y).collect();
        let shape = ta.shape().to_vec();
        let needs = self.needs(a) || self.needs(b);
        self.push(Op::Sub(a, b), Tensor::new(shape, out)?, needs)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_broadcast(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise op with the rhs either shape-equal or a suffix of the lhs
    /// shape (cycled over leading dims) — covers bias vectors and layer-norm
    /// gains applied over rows.
    fn binary_broadcast(
        &mut self,
        a: NodeId,
        b: NodeId,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !suffix_compatible(ta.shape(), tb.shape()) {
            return Err(Error::shape(name, format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let bn = tb.numel();
        let mut out = Vec::with_capacity(ta.numel());
        for chunk in ta.data().chunks(bn) {
            out.extend(chunk.iter().zip(tb.data()).map(|(x, y)| f(*x, *y)));
        }
        let shape = ta.shape().to_vec();
        let needs = self.needs(a) || self.needs(b);
        self.push(op, Tensor::new(shape, out)?, needs)
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        let out: Vec<f64> = self.value(a).data().iter().map(|x| x * factor).collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a);
        self.push(Op::Scale(a, factor), Tensor::new(shape, out)?, needs)
    }

    /// Test fixture with a deliberately decoupled adjoint; used to verify
    /// that the finite-difference checker detects wrong gradients.
    #[doc(hidden)]
    pub fn scale_with_split_adjoint(
        &mut self,
        a: NodeId,
        forward: f64,
        backward: f64,
    ) -> Result<NodeId> {
        let out: Vec<f64> = self.value(a).data().iter().map(|x| x * forward).collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a);
        self.push(Op::ScaleSplit { input: a, backward }, Tensor::new(shape, out)?, needs)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let out: Vec<f64> = self.value(a).data().iter().map(|x| x.max(0.0)).collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a);
        self.push(Op::Relu(a), Tensor::new(shape, out)?, needs)
    }

    pub fn gelu(&mut self, a: NodeId) -> Result<NodeId> {
        let out: Vec<f64> = self.value(a).data().iter().map(|&x| gelu(x)).collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a);
        self.push(Op::Gelu(a), Tensor::new(shape, out)?, needs)
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        let out: Vec<f64> = self.value(a).data().iter().map(|x| x * x).collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a);
        self.push(Op::Square(a), Tensor::new(shape, out)?, needs)
    }

    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId> {
        let out: Vec<f64> = self.value(a).data().iter().map(|x| x.sqrt()).collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a);
        self.push(Op::Sqrt(a), Tensor::new(shape, out)?, needs)
    }

    /// Softmax over the last dimension, applied independently to every row.
    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let ta = self.value(a);
        let m = ta.last_dim();
        let mut out = Vec::with_capacity(ta.numel());
        for row in ta.data().chunks(m) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exp: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
            let denom: f64 = exp.iter().sum();
            out.extend(exp.iter().map(|e| e / denom));
        }
        let shape = ta.shape().to_vec();
        let needs = self.needs(a);
        self.push(Op::SoftmaxRows(a), Tensor::new(shape, out)?, needs)
    }

    /// Per-row normalization to zero mean, unit variance (no affine part;
    /// gains and offsets are separate parameters applied via mul/add).
    pub fn layernorm_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let ta = self.value(a);
        let m = ta.last_dim();
        if m < 1 {
            return Err(Error::shape("layernorm-rows", "empty rows"));
        }
        let mut out = Vec::with_capacity(ta.numel());
        for row in ta.data().chunks(m) {
            let mean = row.iter().sum::<f64>() / m as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / m as f64;
            let denom = (var + LAYERNORM_EPS).sqrt();
            out.extend(row.iter().map(|x| (x - mean) / denom));
        }
        let shape = ta.shape().to_vec();
        let needs = self.needs(a);
        self.push(Op::LayernormRows(a), Tensor::new(shape, out)?, needs)
    }

    /// Concatenate along the last dimension; all leading dims must agree.
    pub fn concat_last(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::shape("concat-last-dim", "no inputs"));
        }
        let lead = self.shape(parts[0])[..self.shape(parts[0]).len() - 1].to_vec();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s[..s.len() - 1] != lead[..] {
                return Err(Error::shape("concat-last-dim", format!("leading dims differ: {:?}", s)));
            }
            widths.push(*s.last().unwrap());
        }
        let rows: usize = lead.iter().product();
        let total_w: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total_w);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                let d = self.value(p).data();
                out.extend_from_slice(&d[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total_w);
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(Op::ConcatLast(parts.to_vec()), Tensor::new(shape, out)?, needs)
    }

    /// Columns `start..start+len` of the last dimension.
    pub fn slice_last(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let ta = self.value(a);
        let m = ta.last_dim();
        if len == 0 || start + len > m {
            return Err(Error::shape(
                "slice",
                format!("range {}..{} of last dim {}", start, start + len, m),
            ));
        }
        let mut out = Vec::with_capacity(ta.folded_rows() * len);
        for row in ta.data().chunks(m) {
            out.extend_from_slice(&row[start..start + len]);
        }
        let mut shape = ta.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        let needs = self.needs(a);
        self.push(Op::SliceLast { input: a, start, len }, Tensor::new(shape, out)?, needs)
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let s: f64 = self.value(a).data().iter().sum();
        let needs = self.needs(a);
        self.push(Op::Sum(a), Tensor::scalar(s), needs)
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.value(a).numel() as f64;
        let s: f64 = self.value(a).data().iter().sum();
        let needs = self.needs(a);
        self.push(Op::Mean(a), Tensor::scalar(s / n), needs)
    }

    pub fn l2norm(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.value(a).l2_norm();
        let needs = self.needs(a);
        self.push(Op::L2Norm(a), Tensor::scalar(s), needs)
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let t = self.value(a).clone().reshaped(shape)?;
        let needs = self.needs(a);
        self.push(Op::Reshape(a), t, needs)
    }

    /// Mean over rows of softmax cross-entropy; `targets` is a distribution
    /// per row (one-hot labels in practice) with the same shape as `logits`.
    pub fn cross_entropy_mean(&mut self, logits: NodeId, targets: NodeId) -> Result<NodeId> {
        let (tl, tt) = (self.value(logits), self.value(targets));
        if tl.shape() != tt.shape() || tl.last_dim() < 2 {
            return Err(Error::shape(
                "softmax-cross-entropy",
                format!("{:?} vs {:?}", tl.shape(), tt.shape()),
            ));
        }
        let k = tl.last_dim();
        let rows = tl.folded_rows();
        let mut total = 0.0;
        for (lrow, trow) in tl.data().chunks(k).zip(tt.data().chunks(k)) {
            let max = lrow.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + lrow.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            total += lrow.iter().zip(trow).map(|(l, t)| t * (lse - l)).sum::<f64>();
        }
        let needs = self.needs(logits) || self.needs(targets);
        self.push(
            Op::CrossEntropyMean(logits, targets),
            Tensor::scalar(total / rows as f64),
            needs,
        )
    }

    // ── backward ────────────────────────────────────────────────────────

    /// Reverse sweep from a scalar root. Every requires-grad leaf ends up
    /// with a gradient (zero when it does not participate in the root).
    pub fn backward(&mut self, root: NodeId) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidInput("backward on an empty graph".into()));
        }
        if self.value(root).numel() != 1 {
            return Err(Error::shape(
                "backward",
                format!("root must be scalar, got {:?}", self.shape(root)),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::new(self.shape(root).to_vec(), vec![1.0])?);

        for i in (0..=root.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let up = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate_inputs(i, &up, &mut grads)?;
            // Leaves keep their accumulated gradient; interior grads are
            // dropped once consumed to bound memory.
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(up);
            }
        }

        // Non-participating requires-grad leaves hold zero gradients.
        for (i, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.needs_grad && grads[i].is_none() {
                grads[i] = Some(Tensor::zeros(node.value.shape().to_vec()));
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate_inputs(
        &self,
        i: usize,
        up: &Tensor,
        grads: &mut [Option<Tensor>],
    ) -> Result<()> {
        let op = self.nodes[i].op.clone();
        let mut put = |this: &Graph, id: NodeId, g: Tensor| -> Result<()> {
            if !this.needs(id) {
                return Ok(());
            }
            if !g.is_finite() {
                return Err(Error::NonFinite {
                    op: this.nodes[i].op.name(),
                    context: " (gradient)".into(),
                });
            }
            match &mut grads[id.0] {
                Some(acc) => {
                    for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a += b;
                    }
                }
                slot => *slot = Some(g),
            }
            Ok(())
        };

        match op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let k = tb.shape()[0];
                let m = tb.shape()[1];
                let rows = ta.numel() / k;
                if self.needs(a) {
                    // dA = dO x B^T
                    let bt = transpose2(tb.data(), k, m);
                    let da = matmul_kernel(up.data(), &bt, rows, m, k);
                    put(self, a, Tensor::new(ta.shape().to_vec(), da)?)?;
                }
                if self.needs(b) {
                    // dB = A^T x dO
                    let at = transpose2(ta.data(), rows, k);
                    let db = matmul_kernel(&at, up.data(), k, rows, m);
                    put(self, b, Tensor::new(tb.shape().to_vec(), db)?)?;
                }
            }
            Op::Bmm(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let (bs, n, k) = (ta.shape()[0], ta.shape()[1], ta.shape()[2]);
                let m = tb.shape()[2];
                if self.needs(a) {
                    let mut da = vec![0.0; ta.numel()];
                    for s in 0..bs {
                        let bt = transpose2(&tb.data()[s * k * m..(s + 1) * k * m], k, m);
                        let block =
                            matmul_kernel(&up.data()[s * n * m..(s + 1) * n * m], &bt, n, m, k);
                        da[s * n * k..(s + 1) * n * k].copy_from_slice(&block);
                    }
                    put(self, a, Tensor::new(ta.shape().to_vec(), da)?)?;
                }
                if self.needs(b) {
                    let mut db = vec![0.0; tb.numel()];
                    for s in 0..bs {
                        let at = transpose2(&ta.data()[s * n * k..(s + 1) * n * k], n, k);
                        let block =
                            matmul_kernel(&at, &up.data()[s * n * m..(s + 1) * n * m], k, n, m);
                        db[s * k * m..(s + 1) * k * m].copy_from_slice(&block);
                    }
                    put(self, b, Tensor::new(tb.shape().to_vec(), db)?)?;
                }
            }
            Op::Transpose(a) => {
                let (g, shape) = transpose_kernel(up);
                debug_assert_eq!(shape, self.shape(a));
                put(self, a, Tensor::new(shape, g)?)?;
            }
            Op::Add(a, b) => {
                put(self, a, up.clone())?;
                if self.needs(b) {
                    put(self, b, reduce_to_suffix(up, self.shape(b)))?;
                }
            }
            Op::Sub(a, b) => {
                put(self, a, up.clone())?;
                if self.needs(b) {
                    let g: Vec<f64> = up.data().iter().map(|v| -v).collect();
                    put(self, b, Tensor::new(self.shape(b).to_vec(), g)?)?;
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let bn = tb.numel();
                if self.needs(a) {
                    let mut g = Vec::with_capacity(ta.numel());
                    for (chunk, uchunk) in ta.data().chunks(bn).zip(up.data().chunks(bn)) {
                        let _ = chunk;
                        g.extend(uchunk.iter().zip(tb.data()).map(|(u, y)| u * y));
                    }
                    put(self, a, Tensor::new(ta.shape().to_vec(), g)?)?;
                }
                if self.needs(b) {
                    let mut g = vec![0.0; bn];
                    for (chunk, uchunk) in ta.data().chunks(bn).zip(up.data().chunks(bn)) {
                        for j in 0..bn {
                            g[j] += uchunk[j] * chunk[j];
                        }
                    }
                    put(self, b, Tensor::new(tb.shape().to_vec(), g)?)?;
                }
            }
            Op::Scale(a, c) => {
                let g: Vec<f64> = up.data().iter().map(|v| v * c).collect();
                put(self, a, Tensor::new(self.shape(a).to_vec(), g)?)?;
            }
            Op::ScaleSplit { input, backward } => {
                let g: Vec<f64> = up.data().iter().map(|v| v * backward).collect();
                put(self, input, Tensor::new(self.shape(input).to_vec(), g)?)?;
            }
            Op::Relu(a) => {
                let x = self.value(a).data();
                let g: Vec<f64> =
                    up.data().iter().zip(x).map(|(u, &v)| if v > 0.0 { *u } else { 0.0 }).collect();
                put(self, a, Tensor::new(self.shape(a).to_vec(), g)?)?;
            }
            Op::Gelu(a) => {
                let x = self.value(a).data();
                let g: Vec<f64> = up.data().iter().zip(x).map(|(u, &v)| u * gelu_grad(v)).collect();
                put(self, a, Tensor::new(self.shape(a).to_vec(), g)?)?;
            }
            Op::Square(a) => {
                let x = self.value(a).data();
                let g: Vec<f64> = up.data().iter().zip(x).map(|(u, &v)| 2.0 * v * u).collect();
                put(self, a, Tensor::new(self.shape(a).to_vec(), g)?)?;
            }
            Op::Sqrt(a) => {
                let y = self.value(NodeId(i)).data();
                let g: Vec<f64> = up.data().iter().zip(y).map(|(u, &s)| u / (2.0 * s)).collect();
                put(self, a, Tensor::new(self.shape(a).to_vec(), g)?)?;
            }
            Op::SoftmaxRows(a) => {
                let y = self.value(NodeId(i));
                let m = y.last_dim();
                let mut g = Vec::with_capacity(y.numel());
                for (yrow, urow) in y.data().chunks(m).zip(up.data().chunks(m)) {
                    let dot: f64 = yrow.iter().zip(urow).map(|(y, u)| y * u).sum();
                    g.extend(yrow.iter().zip(urow).map(|(y, u)| y * (u - dot)));
                }
                put(self, a, Tensor::new(self.shape(a).to_vec(), g)?)?;
            }
            Op::LayernormRows(a) => {
                let x = self.value(a);
                let y = self.value(NodeId(i));
                let m = x.last_dim();
                let mf = m as f64;
                let mut g = Vec::with_capacity(x.numel());
                for ((xrow, yrow), urow) in
                    x.data().chunks(m).zip(y.data().chunks(m)).zip(up.data().chunks(m))
                {
                    let mean = xrow.iter().sum::<f64>() / mf;
                    let var = xrow.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / mf;
                    let denom = (var + LAYERNORM_EPS).sqrt();
                    let mean_u = urow.iter().sum::<f64>() / mf;
                    let mean_uy: f64 = urow.iter().zip(yrow).map(|(u, y)| u * y).sum::<f64>() / mf;
                    g.extend(
                        urow.iter()
                            .zip(yrow)
                            .map(|(u, y)| (u - mean_u - y * mean_uy) / denom),
                    );
                }
                put(self, a, Tensor::new(self.shape(a).to_vec(), g)?)?;
            }
            Op::ConcatLast(parts) => {
                let out_w = self.value(NodeId(i)).last_dim();
                let rows = self.value(NodeId(i)).folded_rows();
                let mut offset = 0;
                for &p in &parts {
                    let w = self.value(p).last_dim();
                    if self.needs(p) {
                        let mut g = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            let base = r * out_w + offset;
                            g.extend_from_slice(&up.data()[base..base + w]);
                        }
                        put(self, p, Tensor::new(self.shape(p).to_vec(), g)?)?;
                    }
                    offset += w;
                }
            }
            Op::SliceLast { input, start, len } => {
                let tin = self.value(input);
                let m = tin.last_dim();
                let rows = tin.folded_rows();
                let mut g = vec![0.0; tin.numel()];
                for r in 0..rows {
                    g[r * m + start..r * m + start + len]
                        .copy_from_slice(&up.data()[r * len..(r + 1) * len]);
                }
                put(self, input, Tensor::new(tin.shape().to_vec(), g)?)?;
            }
            Op::Sum(a) => {
                let u = up.data()[0];
                put(self, a, Tensor::filled(self.shape(a).to_vec(), u))?;
            }
            Op::Mean(a) => {
                let n = self.value(a).numel() as f64;
                let u = up.data()[0] / n;
                put(self, a, Tensor::filled(self.shape(a).to_vec(), u))?;
            }
            Op::L2Norm(a) => {
                let norm = self.value(NodeId(i)).data()[0];
                let u = up.data()[0];
                let x = self.value(a).data();
                let g: Vec<f64> = if norm == 0.0 {
                    vec![0.0; x.len()]
                } else {
                    x.iter().map(|v| u * v / norm).collect()
                };
                put(self, a, Tensor::new(self.shape(a).to_vec(), g)?)?;
            }
            Op::Reshape(a) => {
                let g = up.clone().reshaped(self.shape(a).to_vec())?;
                put(self, a, g)?;
            }
            Op::CrossEntropyMean(l, t) => {
                let (tl, tt) = (self.value(l), self.value(t));
                let k = tl.last_dim();
                let rows = tl.folded_rows() as f64;
                let u = up.data()[0] / rows;
                if self.needs(l) {
                    let mut g = Vec::with_capacity(tl.numel());
                    for (lrow, trow) in tl.data().chunks(k).zip(tt.data().chunks(k)) {
                        let max = lrow.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let exps: Vec<f64> = lrow.iter().map(|x| (x - max).exp()).collect();
                        let denom: f64 = exps.iter().sum();
                        let tsum: f64 = trow.iter().sum();
                        g.extend(
                            exps.iter().zip(trow).map(|(e, t)| u * (tsum * e / denom - t)),
                        );
                    }
                    put(self, l, Tensor::new(tl.shape().to_vec(), g)?)?;
                }
                if self.needs(t) {
                    let mut g = Vec::with_capacity(tt.numel());
                    for lrow in tl.data().chunks(k) {
                        let max = lrow.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let lse = max + lrow.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
                        g.extend(lrow.iter().map(|l| u * (lse - l)));
                    }
                    put(self, t, Tensor::new(tt.shape().to_vec(), g)?)?;
                }
            }
        }
        Ok(())
    }
}

// ── kernels ─────────────────────────────────────────────────────────────

fn matmul_kernel(a: &[f64], b: &[f64], rows: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * m];
    let run_row = |i: usize, orow: &mut [f64]| {
        let arow = &a[i * k..(i + 1) * k];
        for (kk, &av) in arow.iter().enumerate() {
            // Selection/scatter matrices are mostly zeros; skipping them is a
            // large win and does not change results.
            if av != 0.0 {
                let brow = &b[kk * m..(kk + 1) * m];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    };
    if rows * m * k >= PAR_THRESHOLD && rows > 1 {
        out.par_chunks_mut(m).enumerate().for_each(|(i, row)| run_row(i, row));
    } else {
        for (i, row) in out.chunks_mut(m).enumerate() {
            run_row(i, row);
        }
    }
    out
}

fn bmm_kernel(a: &[f64], b: &[f64], bs: usize, n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; bs * n * m];
    let run_batch = |s: usize, oblock: &mut [f64]| {
        let ablock = &a[s * n * k..(s + 1) * n * k];
        let bblock = &b[s * k * m..(s + 1) * k * m];
        for i in 0..n {
            let orow = &mut oblock[i * m..(i + 1) * m];
            let arow = &ablock[i * k..(i + 1) * k];
            for (kk, &av) in arow.iter().enumerate() {
                if av != 0.0 {
                    let brow = &bblock[kk * m..(kk + 1) * m];
                    for (o, &bv) in orow.iter_mut().zip(brow) {
                        *o += av * bv;
                    }
                }
            }
        }
    };
    if bs * n * m * k >= PAR_THRESHOLD && bs > 1 {
        out.par_chunks_mut(n * m).enumerate().for_each(|(s, block)| run_batch(s, block));
    } else {
        for (s, block) in out.chunks_mut(n * m).enumerate() {
            run_batch(s, block);
        }
    }
    out
}

fn transpose2(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = x[i * cols + j];
        }
    }
    out
}

fn transpose_kernel(t: &Tensor) -> (Vec<f64>, Vec<usize>) {
    let rank = t.rank();
    let n = t.shape()[rank - 2];
    let m = t.shape()[rank - 1];
    let batches = t.numel() / (n * m);
    let mut out = Vec::with_capacity(t.numel());
    for s in 0..batches {
        out.extend(transpose2(&t.data()[s * n * m..(s + 1) * n * m], n, m));
    }
    let mut shape = t.shape().to_vec();
    shape[rank - 2] = m;
    shape[rank - 1] = n;
    (out, shape)
}

fn suffix_compatible(lhs: &[usize], rhs: &[usize]) -> bool {
    rhs.len() <= lhs.len() && lhs[lhs.len() - rhs.len()..] == *rhs
}

/// Sum an upstream gradient over leading dims down to the rhs suffix shape.
fn reduce_to_suffix(up: &Tensor, target_shape: &[usize]) -> Tensor {
    let tn: usize = target_shape.iter().product();
    let mut g = vec![0.0; tn];
    for chunk in up.data().chunks(tn) {
        for (acc, v) in g.iter_mut().zip(chunk) {
            *acc += v;
        }
    }
    Tensor::new(target_shape.to_vec(), g).expect("suffix shape validated at forward time")
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.7978845608028654; // sqrt(2/pi)
    const A: f64 = 0.044715;
    0.5 * x * (1.0 + (C * (x + A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.7978845608028654;
    const A: f64 = 0.044715;
    let u = C * (x + A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * A * x * x)
}

// ── finite-difference oracle ────────────────────────────────────────────

/// Report of a gradient check against central finite differences.
#[derive(Debug, Clone)]
pub struct FdReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub pass: bool,
    pub worst_index: usize,
}

/// Compare the backward gradient of `f` at `x` against central finite
/// differences, coordinate by coordinate.
///
/// A coordinate passes when its absolute error is under the 1e-8 floor or
/// its relative error is within `tol`. `f` builds a scalar from the supplied
/// leaf; it is re-evaluated at `x ± step·e_i` for every coordinate.
pub fn finite_difference_check<F>(f: F, x: &Tensor, step: f64, tol: f64) -> Result<FdReport>
where
    F: Fn(&mut Graph, NodeId) -> Result<NodeId>,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let analytic = {
        let mut g = Graph::new();
        let xid = g.leaf(x.clone(), true)?;
        let root = f(&mut g, xid)?;
        if g.value(root).numel() != 1 {
            return Err(Error::shape("finite-difference-check", "f must return a scalar"));
        }
        let mut grads = g.backward(root)?;
        grads.take(xid).expect("requires-grad leaf always holds a gradient")
    };

    let eval = |probe: &Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let xid = g.leaf(probe.clone(), false)?;
        let root = f(&mut g, xid)?;
        g.value(root).item()
    };

    let mut max_rel = 0.0_f64;
    let mut max_abs = 0.0_f64;
    let mut worst = 0;
    let mut pass = true;
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let fp = eval(&probe)?;
        probe.data_mut()[i] = orig - step;
        let fm = eval(&probe)?;
        probe.data_mut()[i] = orig;

        let numeric = (fp - fm) / (2.0 * step);
        let a = analytic.data()[i];
        let abs = (a - numeric).abs();
        let rel = abs / a.abs().max(numeric.abs()).max(1e-8);
        if rel > max_rel {
            max_rel = rel;
            worst = i;
        }
        max_abs = max_abs.max(abs);
        if abs > 1e-8 && rel > tol {
            pass = false;
        }
    }
    Ok(FdReport { max_rel_error: max_rel, max_abs_error: max_abs, pass, worst_index: worst })
}
