//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A tape records one forward pass. Parameters enter as named leaves; after
//! [`Tape::backward`] their gradients are returned by name. Leaves of frozen
//! parameters and constants never receive gradients, and ops whose inputs all
//! lack gradients are skipped.

use std::collections::{BTreeMap, HashMap};

use hoi_core::{HoiError, Result};

use crate::params::ParamStore;
use crate::tensor::{gelu_grad_from, gelu_with_tanh, gemm, layer_norm, matmul, matmul_nt_acc, matmul_tn_acc, softmax_in_place, Tensor, View};

pub type NodeId = usize;

enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    /// `x W + b`.
    Linear(NodeId, NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    Gelu(NodeId, Vec<f64>),
    Relu(NodeId),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        means: Vec<f64>,
        rstds: Vec<f64>,
    },
    Attention {
        qkv: NodeId,
        heads: usize,
        segments: Vec<(usize, usize)>,
        probs: Vec<Vec<f64>>,
    },
    Rows(Vec<(NodeId, usize)>),
    Reshape(NodeId),
    MaxPoolRows {
        x: NodeId,
        argmax: Vec<usize>,
    },
    CrossEntropy {
        logits: NodeId,
        targets: Vec<Option<usize>>,
        probs: Tensor,
        count: usize,
    },
    L1 {
        pred: NodeId,
        target: Tensor,
        row_weights: Vec<f64>,
    },
    WeightedSum(Vec<(NodeId, f64)>),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<String, NodeId>,
}

/// Gradients of trainable parameters, keyed by parameter name.
pub type Gradients = BTreeMap<String, Tensor>;

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

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad });
        self.nodes.len() - 1
    }

    fn ng(&self, id: NodeId) -> bool {
        self.nodes[id].needs_grad
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf holding a parameter; repeated requests share one node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> NodeId {
        if let Some(&id) = self.params.get(name) {
            return id;
        }
        let p = store.get(name);
        let id = self.push(p.value.clone(), Op::Leaf, p.trainable);
        self.params.insert(name.to_string(), id);
        id
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = matmul(self.value(a), self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::MatMul(a, b), ng)
    }

    /// `x W + b` with a `[1, n]` bias.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        assert_eq!(xv.cols, wv.rows, "linear shape mismatch {:?} x {:?}", xv.shape(), wv.shape());
        assert_eq!((1, wv.cols), bv.shape(), "bias shape mismatch");
        let mut v = Tensor::zeros(xv.rows, wv.cols);
        for i in 0..v.rows {
            v.row_mut(i).copy_from_slice(&bv.data);
        }
        let n = wv.cols;
        gemm(xv.rows, xv.cols, n, 1.0, View::of(xv), View::of(wv), 1.0, &mut v.data, 0, n, 1);
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        self.push(v, Op::Linear(x, w, b), ng)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "add shape mismatch");
        let v = Tensor::from_vec(x.rows, x.cols, x.data.iter().zip(&y.data).map(|(p, q)| p + q).collect());
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Add(a, b), ng)
    }

    /// `x + bias` with a `[1, n]` bias broadcast over rows.
    pub fn add_row(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let (xv, bv) = (self.value(x), self.value(bias));
        assert_eq!((1, xv.cols), bv.shape(), "bias shape mismatch");
        let mut v = xv.clone();
        for i in 0..v.rows {
            for (o, b) in v.row_mut(i).iter_mut().zip(&bv.data) {
                *o += b;
            }
        }
        let ng = self.ng(x) || self.ng(bias);
        self.push(v, Op::AddRow(x, bias), ng)
    }

    pub fn scale(&mut self, x: NodeId, s: f64) -> NodeId {
        let v = self.value(x).scaled(s);
        let ng = self.ng(x);
        self.push(v, Op::Scale(x, s), ng)
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let (vals, tanhs): (Vec<f64>, Vec<f64>) = xv.data.iter().map(|v| gelu_with_tanh(*v)).unzip();
        let v = Tensor::from_vec(xv.rows, xv.cols, vals);
        let ng = self.ng(x);
        self.push(v, Op::Gelu(x, tanhs), ng)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let v = Tensor::from_vec(xv.rows, xv.cols, xv.data.iter().map(|v| v.max(0.0)).collect());
        let ng = self.ng(x);
        self.push(v, Op::Relu(x), ng)
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        let (v, means, rstds) = layer_norm(self.value(x), &self.value(gamma).data, &self.value(beta).data);
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        self.push(
            v,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                means,
                rstds,
            },
            ng,
        )
    }

    /// Multi-head causal self-attention over packed sequences.
    ///
    /// `qkv` is `[T, 3d]` with query, key and value blocks side by side;
    /// `segments` lists `(start, len)` of independent sequences.
    pub fn attention(&mut self, qkv: NodeId, heads: usize, segments: &[(usize, usize)]) -> NodeId {
        let x = self.value(qkv);
        let d = x.cols / 3;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = Tensor::zeros(x.rows, d);
        let mut probs = Vec::with_capacity(segments.len() * heads);
        for &(start, len) in segments {
            for h in 0..heads {
                let mut p = vec![0.0; len * len];
                let q = View::slice(&x.data, start * 3 * d + h * dh, 3 * d, 1);
                let kt = View::slice(&x.data, start * 3 * d + d + h * dh, 1, 3 * d);
                gemm(len, dh, len, scale, q, kt, 0.0, &mut p, 0, len, 1);
                for i in 0..len {
                    let row = &mut p[i * len..(i + 1) * len];
                    softmax_in_place(&mut row[..=i]);
                    row[i + 1..].iter_mut().for_each(|v| *v = 0.0);
                }
                let v = View::slice(&x.data, start * 3 * d + 2 * d + h * dh, 3 * d, 1);
                gemm(len, len, dh, 1.0, View::slice(&p, 0, len, 1), v, 0.0, &mut out.data, start * d + h * dh, d, 1);
                probs.push(p);
            }
        }
        let ng = self.ng(qkv);
        self.push(
            out,
            Op::Attention {
                qkv,
                heads,
                segments: segments.to_vec(),
                probs,
            },
            ng,
        )
    }

    /// Output row `i` is row `sources[i].1` of node `sources[i].0`.
    pub fn rows(&mut self, sources: Vec<(NodeId, usize)>) -> NodeId {
        assert!(!sources.is_empty(), "rows() needs at least one source");
        let cols = self.value(sources[0].0).cols;
        let mut v = Tensor::zeros(sources.len(), cols);
        let mut ng = false;
        for (i, &(n, r)) in sources.iter().enumerate() {
            let src = self.value(n);
            assert_eq!(src.cols, cols, "rows() sources differ in width");
            v.row_mut(i).copy_from_slice(src.row(r));
            ng |= self.ng(n);
        }
        self.push(v, Op::Rows(sources), ng)
    }

    pub fn reshape(&mut self, x: NodeId, rows: usize, cols: usize) -> NodeId {
        let xv = self.value(x);
        assert_eq!(xv.len(), rows * cols, "reshape size mismatch");
        let v = Tensor::from_vec(rows, cols, xv.data.clone());
        let ng = self.ng(x);
        self.push(v, Op::Reshape(x), ng)
    }

    /// Column-wise maximum over rows, `[n, c] -> [1, c]`.
    pub fn max_pool_rows(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let mut v = Tensor::from_vec(1, xv.cols, xv.row(0).to_vec());
        let mut argmax = vec![0; xv.cols];
        for i in 1..xv.rows {
            for (j, &val) in xv.row(i).iter().enumerate() {
                if val > v.data[j] {
                    v.data[j] = val;
                    argmax[j] = i;
                }
            }
        }
        let ng = self.ng(x);
        self.push(v, Op::MaxPoolRows { x, argmax }, ng)
    }

    /// Mean cross-entropy over rows that have a target.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[Option<usize>]) -> Result<NodeId> {
        let lv = self.value(logits);
        if targets.len() != lv.rows {
            return Err(HoiError::Shape(format!("{} targets for {} logit rows", targets.len(), lv.rows)));
        }
        let count = targets.iter().filter(|t| t.is_some()).count();
        if count == 0 {
            return Err(HoiError::Domain("cross-entropy mask selects no positions".into()));
        }
        let mut probs = Tensor::zeros(lv.rows, lv.cols);
        let mut loss = 0.0;
        for (i, t) in targets.iter().enumerate() {
            if let Some(t) = t {
                let p = probs.row_mut(i);
                p.copy_from_slice(lv.row(i));
                softmax_in_place(p);
                let row = lv.row(i);
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                loss += lse - row[*t];
            }
        }
        let ng = self.ng(logits);
        Ok(self.push(
            Tensor::scalar(loss / count as f64),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
                count,
            },
            ng,
        ))
    }

    /// `sum_i w_i * sum_j |pred_ij - target_ij|`.
    pub fn l1(&mut self, pred: NodeId, target: Tensor, row_weights: Vec<f64>) -> Result<NodeId> {
        let pv = self.value(pred);
        if pv.shape() != target.shape() || row_weights.len() != pv.rows {
            return Err(HoiError::Shape(format!(
                "l1 prediction {:?} vs target {:?}",
                pv.shape(),
                target.shape()
            )));
        }
        let mut loss = 0.0;
        for i in 0..pv.rows {
            let s: f64 = pv.row(i).iter().zip(target.row(i)).map(|(p, t)| (p - t).abs()).sum();
            loss += row_weights[i] * s;
        }
        let ng = self.ng(pred);
        Ok(self.push(Tensor::scalar(loss), Op::L1 { pred, target, row_weights }, ng))
    }

    /// `sum_k c_k * x_k` over `[1, 1]` nodes.
    pub fn weighted_sum(&mut self, terms: Vec<(NodeId, f64)>) -> NodeId {
        let v: f64 = terms.iter().map(|(n, c)| c * self.value(*n).item()).sum();
        let ng = terms.iter().any(|(n, _)| self.ng(*n));
        self.push(Tensor::scalar(v), Op::WeightedSum(terms), ng)
    }

    /// Back-propagates from a scalar node; returns gradients of trainable parameters.
    pub fn backward(&self, root: NodeId) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root] = Some(Tensor::scalar(1.0));
        for id in (0..=root).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].needs_grad {
                continue;
            }
            self.backprop(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        self.params
            .iter()
            .filter(|(_, &id)| self.nodes[id].needs_grad)
            .map(|(name, &id)| {
                let v = &self.nodes[id].value;
                let g = grads[id].take().unwrap_or_else(|| Tensor::zeros(v.rows, v.cols));
                (name.clone(), g)
            })
            .collect()
    }

    fn acc<'a>(&self, grads: &'a mut [Option<Tensor>], id: NodeId) -> Option<&'a mut Tensor> {
        if !self.nodes[id].needs_grad {
            return None;
        }
        let v = &self.nodes[id].value;
        Some(grads[id].get_or_insert_with(|| Tensor::zeros(v.rows, v.cols)))
    }

    /// Adds `g` to a node's gradient, taking a copy when it is the first contribution.
    fn acc_add(&self, grads: &mut [Option<Tensor>], id: NodeId, g: &Tensor) {
        if !self.nodes[id].needs_grad {
            return;
        }
        match &mut grads[id] {
            Some(existing) => existing.add_assign(g),
            slot @ None => *slot = Some(g.clone()),
        }
    }

    fn backprop(&self, id: NodeId, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(ga) = self.acc(grads, *a) {
                    matmul_nt_acc(g, bv, ga);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    matmul_tn_acc(av, g, gb);
                }
            }
            Op::Linear(x, w, b) => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                if let Some(gx) = self.acc(grads, *x) {
                    matmul_nt_acc(g, wv, gx);
                }
                if let Some(gw) = self.acc(grads, *w) {
                    matmul_tn_acc(xv, g, gw);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for i in 0..g.rows {
                        for (o, v) in gb.data.iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for n in [*a, *b] {
                    self.acc_add(grads, n, g);
                }
            }
            Op::AddRow(x, bias) => {
                self.acc_add(grads, *x, g);
                if let Some(gb) = self.acc(grads, *bias) {
                    for i in 0..g.rows {
                        for (o, v) in gb.data.iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                }
            }
            Op::Scale(x, s) => {
                if let Some(gx) = self.acc(grads, *x) {
                    for (o, v) in gx.data.iter_mut().zip(&g.data) {
                        *o += s * v;
                    }
                }
            }
            Op::Gelu(x, tanhs) => {
                let xv = &self.nodes[*x].value;
                if let Some(gx) = self.acc(grads, *x) {
                    for (((o, v), xi), ti) in gx.data.iter_mut().zip(&g.data).zip(&xv.data).zip(tanhs) {
                        *o += v * gelu_grad_from(*xi, *ti);
                    }
                }
            }
            Op::Relu(x) => {
                let xv = &self.nodes[*x].value;
                if let Some(gx) = self.acc(grads, *x) {
                    for ((o, v), xi) in gx.data.iter_mut().zip(&g.data).zip(&xv.data) {
                        if *xi > 0.0 {
                            *o += v;
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                means,
                rstds,
            } => {
                let xv = self.value(*x);
                let gm = &self.value(*gamma).data;
                let n = xv.cols as f64;
                let mut dgamma = vec![0.0; xv.cols];
                let mut dbeta = vec![0.0; xv.cols];
                let mut dx = self.ng(*x).then(|| Tensor::zeros(xv.rows, xv.cols));
                for i in 0..xv.rows {
                    let (mean, rstd) = (means[i], rstds[i]);
                    let xr = xv.row(i);
                    let gr = g.row(i);
                    let mut sum_dy = 0.0;
                    let mut sum_dy_xhat = 0.0;
                    for j in 0..xv.cols {
                        let xhat = (xr[j] - mean) * rstd;
                        dgamma[j] += gr[j] * xhat;
                        dbeta[j] += gr[j];
                        let dy = gr[j] * gm[j];
                        sum_dy += dy;
                        sum_dy_xhat += dy * xhat;
                    }
                    if let Some(dx) = dx.as_mut() {
                        let out = dx.row_mut(i);
                        for j in 0..out.len() {
                            let xhat = (xr[j] - mean) * rstd;
                            let dy = gr[j] * gm[j];
                            out[j] = rstd * (dy - sum_dy / n - xhat * sum_dy_xhat / n);
                        }
                    }
                }
                if let Some(dx) = dx {
                    self.acc_add(grads, *x, &dx);
                }
                if let Some(gg) = self.acc(grads, *gamma) {
                    gg.data.iter_mut().zip(&dgamma).for_each(|(o, v)| *o += v);
                }
                if let Some(gb) = self.acc(grads, *beta) {
                    gb.data.iter_mut().zip(&dbeta).for_each(|(o, v)| *o += v);
                }
            }
            Op::Attention {
                qkv,
                heads,
                segments,
                probs,
            } => {
                let x = self.value(*qkv);
                let d = x.cols / 3;
                let dh = d / heads;
                let scale = 1.0 / (dh as f64).sqrt();
                let mut dx = Tensor::zeros(x.rows, 3 * d);
                let mut pi = 0;
                for &(start, len) in segments {
                    for h in 0..*heads {
                        let p = &probs[pi];
                        pi += 1;
                        let go = View::slice(&g.data, start * d + h * dh, d, 1);
                        let q_off = start * 3 * d + h * dh;
                        let k_off = q_off + d;
                        let v_off = q_off + 2 * d;
                        // dP = dO V^T
                        let mut dp = vec![0.0; len * len];
                        gemm(len, dh, len, 1.0, go, View::slice(&x.data, v_off, 1, 3 * d), 0.0, &mut dp, 0, len, 1);
                        // dV += P^T dO
                        gemm(len, len, dh, 1.0, View::slice(p, 0, 1, len), go, 1.0, &mut dx.data, v_off, 3 * d, 1);
                        // dS = P * (dP - rowsum(P * dP)), causal entries only
                        for i in 0..len {
                            let pr = &p[i * len..(i + 1) * len];
                            let dr = &mut dp[i * len..(i + 1) * len];
                            let dot: f64 = (0..=i).map(|j| pr[j] * dr[j]).sum();
                            for j in 0..len {
                                dr[j] = if j <= i { pr[j] * (dr[j] - dot) } else { 0.0 };
                            }
                        }
                        gemm(len, len, dh, scale, View::slice(&dp, 0, len, 1), View::slice(&x.data, k_off, 3 * d, 1), 1.0, &mut dx.data, q_off, 3 * d, 1);
                        gemm(len, len, dh, scale, View::slice(&dp, 0, 1, len), View::slice(&x.data, q_off, 3 * d, 1), 1.0, &mut dx.data, k_off, 3 * d, 1);
                    }
                }
                self.acc_add(grads, *qkv, &dx);
            }
            Op::Rows(sources) => {
                for (i, &(n, r)) in sources.iter().enumerate() {
                    if let Some(gn) = self.acc(grads, n) {
                        for (o, v) in gn.row_mut(r).iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(gx) = self.acc(grads, *x) {
                    gx.data.iter_mut().zip(&g.data).for_each(|(o, v)| *o += v);
                }
            }
            Op::MaxPoolRows { x, argmax } => {
                if let Some(gx) = self.acc(grads, *x) {
                    let cols = gx.cols;
                    for (j, &i) in argmax.iter().enumerate() {
                        gx.data[i * cols + j] += g.data[j];
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
                count,
            } => {
                let s = g.item() / *count as f64;
                if let Some(gl) = self.acc(grads, *logits) {
                    for (i, t) in targets.iter().enumerate() {
                        if let Some(t) = t {
                            let out = gl.row_mut(i);
                            for (o, p) in out.iter_mut().zip(probs.row(i)) {
                                *o += s * p;
                            }
                            out[*t] -= s;
                        }
                    }
                }
            }
            Op::L1 {
                pred,
                target,
                row_weights,
            } => {
                let pv = self.value(*pred);
                let gi = g.item();
                if let Some(gp) = self.acc(grads, *pred) {
                    for i in 0..pv.rows {
                        let w = gi * row_weights[i];
                        for ((o, p), t) in gp.row_mut(i).iter_mut().zip(pv.row(i)).zip(target.row(i)) {
                            let d = p - t;
                            if d != 0.0 {
                                *o += w * d.signum();
                            }
                        }
                    }
                }
            }
            Op::WeightedSum(terms) => {
                for &(n, c) in terms {
                    if let Some(gn) = self.acc(grads, n) {
                        gn.data[0] += c * g.item();
                    }
                }
            }
        }
    }
}
