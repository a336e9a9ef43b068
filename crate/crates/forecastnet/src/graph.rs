//! Minimal reverse-mode differentiation over a linear computation record.
//!
//! Operations are recorded eagerly into a [`Graph`] during the forward
//! pass. [`Graph::backward`] replays the record in reverse, accumulating
//! one gradient tensor per node. The record is topologically ordered by
//! construction (an op can only reference earlier nodes), so a single
//! reverse sweep computes exact total derivatives.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Unique identifier of a trainable parameter within one model.
///
/// Ids double as indices into the model's [`ParamStore`]; uniqueness is
/// what makes the no-sharing census meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// A trainable tensor with its gradient accumulator.
///
/// Gradients accumulate across backward passes and must be explicitly
/// zeroed between optimizer steps.
#[derive(Debug, Clone)]
pub struct Param {
    pub id: ParamId,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(id: ParamId, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Param { id, value, grad }
    }
}

/// Flat, id-indexed container for a model's parameters.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    /// Registers a new parameter and returns its id.
    pub fn alloc(&mut self, value: Tensor) -> ParamId {
        let id = ParamId(self.params.len());
        self.params.push(Param::new(id, value));
        id
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill_zero();
        }
    }

    /// Divides every gradient by `n` (mini-batch averaging).
    pub fn scale_grads(&mut self, c: f64) {
        for p in &mut self.params {
            p.grad.scale(c);
        }
    }

    /// Sum of parameter element counts.
    pub fn total_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// Elementwise activation kinds supported by the numeric core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Softplus,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Softplus => softplus(x),
        }
    }

    /// Derivative as a function of the pre-activation input.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Softplus => sigmoid(x),
        }
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

/// Overflow-safe softplus: for x > 30 the direct `exp` would saturate,
/// so the identity softplus(x) = x + log1p(exp(-x)) is used instead.
/// Very negative inputs underflow past the smallest double; the result
/// is clamped to the smallest positive normal so downstream code can
/// rely on strict positivity.
pub fn softplus(x: f64) -> f64 {
    let y = if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    };
    y.max(f64::MIN_POSITIVE)
}

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    /// Constant leaf; receives a gradient but propagates nothing.
    Input,
    /// Leaf bound to a model parameter.
    Param(ParamId),
    /// out[i] = sum_j w[i][j] * x[j] + b[i]
    Affine { w: NodeId, x: NodeId, b: NodeId },
    Activation { kind: Activation, x: NodeId },
    /// Valid (no padding) cross-correlation over [c_in, len] input.
    Conv1dValid {
        x: NodeId,
        kernels: NodeId,
        bias: NodeId,
    },
    AvgPool1d {
        x: NodeId,
        pool: usize,
        stride: usize,
    },
    Concat { parts: Vec<NodeId> },
    /// Shape reinterpretation; data order unchanged.
    Reshape { x: NodeId },
    /// Scalar dot product against a constant weight vector.
    Dot { x: NodeId, weights: Tensor },
    /// Negative log density of N(target; mu, sigma^2); mu, sigma scalar nodes.
    GaussianNll {
        mu: NodeId,
        sigma: NodeId,
        target: f64,
    },
    /// Mean squared residual against a constant target.
    Mse { pred: NodeId, target: Tensor },
    /// Arithmetic mean of all entries.
    Mean { x: NodeId },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Ordered record of primitive applications, replayable backward.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by one backward sweep.
pub struct Gradients {
    node_grads: Vec<Tensor>,
}

impl Gradients {
    pub fn node(&self, id: NodeId) -> &Tensor {
        &self.node_grads[id]
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
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

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node { value, op });
        id
    }

    /// Constant leaf.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Input)
    }

    /// Parameter leaf; the value is snapshotted at registration.
    pub fn param(&mut self, p: &Param) -> NodeId {
        self.push(p.value.clone(), Op::Param(p.id))
    }

    /// Nodes that are parameter leaves, as (node, param id) pairs.
    pub fn param_nodes(&self) -> impl Iterator<Item = (NodeId, ParamId)> + '_ {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n.op {
            Op::Param(id) => Some((i, id)),
            _ => None,
        })
    }

    /// Smallest |pre-activation| over every ReLU application in the
    /// record, or infinity when none exists. Finite-difference oracles
    /// are only valid when this margin comfortably exceeds the probe
    /// step, since the loss has a corner at each ReLU kink.
    pub fn min_relu_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        for n in &self.nodes {
            if let Op::Activation {
                kind: Activation::Relu,
                x,
            } = n.op
            {
                for v in self.nodes[x].value.data() {
                    margin = margin.min(v.abs());
                }
            }
        }
        margin
    }

    /// Matrix-vector affine map: w is [m, n], x is [n], b is [m].
    pub fn affine(&mut self, w: NodeId, x: NodeId, b: NodeId) -> Result<NodeId> {
        let (ws, xs, bs) = (
            self.nodes[w].value.shape().to_vec(),
            self.nodes[x].value.shape().to_vec(),
            self.nodes[b].value.shape().to_vec(),
        );
        if ws.len() != 2 || xs.len() != 1 || bs.len() != 1 || ws[1] != xs[0] || ws[0] != bs[0] {
            return Err(Error::Dimension(format!(
                "affine shapes do not conform: w {:?}, x {:?}, b {:?}",
                ws, xs, bs
            )));
        }
        let (m, n) = (ws[0], ws[1]);
        let wv = self.nodes[w].value.data();
        let xv = self.nodes[x].value.data();
        let bv = self.nodes[b].value.data();
        let mut out = vec![0.0; m];
        for i in 0..m {
            let row = &wv[i * n..(i + 1) * n];
            let dot: f64 = row.iter().zip(xv).map(|(a, b)| a * b).sum();
            out[i] = bv[i] + dot;
        }
        Ok(self.push(Tensor::from_vec(out), Op::Affine { w, x, b }))
    }

    pub fn activation(&mut self, kind: Activation, x: NodeId) -> NodeId {
        let out: Vec<f64> = self.nodes[x].value.data().iter().map(|&v| kind.apply(v)).collect();
        let shape = self.nodes[x].value.shape().to_vec();
        let mut tensor = Tensor::from_vec(out);
        if shape.len() != 1 {
            tensor = tensor.reshaped(&shape).expect("same element count");
        }
        self.push(tensor, Op::Activation { kind, x })
    }

    /// Valid cross-correlation. x is [c_in, len], kernels [c_out, c_in, k],
    /// bias [c_out]; output is [c_out, len - k + 1].
    pub fn conv1d_valid(&mut self, x: NodeId, kernels: NodeId, bias: NodeId) -> Result<NodeId> {
        let xs = self.nodes[x].value.shape().to_vec();
        let ks = self.nodes[kernels].value.shape().to_vec();
        let bs = self.nodes[bias].value.shape().to_vec();
        if xs.len() != 2 || ks.len() != 3 || bs.len() != 1 {
            return Err(Error::Dimension(format!(
                "conv1d expects x [c_in, len], kernels [c_out, c_in, k], bias [c_out]; got {:?}, {:?}, {:?}",
                xs, ks, bs
            )));
        }
        let (c_in, len) = (xs[0], xs[1]);
        let (c_out, kc_in, k) = (ks[0], ks[1], ks[2]);
        if kc_in != c_in || bs[0] != c_out {
            return Err(Error::Dimension(format!(
                "conv1d channel mismatch: x {:?}, kernels {:?}, bias {:?}",
                xs, ks, bs
            )));
        }
        if len < k {
            return Err(Error::Dimension(format!(
                "conv1d input length {} shorter than kernel {}",
                len, k
            )));
        }
        let out_len = len - k + 1;
        let xv = self.nodes[x].value.data();
        let kv = self.nodes[kernels].value.data();
        let bv = self.nodes[bias].value.data();
        let mut out = vec![0.0; c_out * out_len];
        // Accumulate one shifted, scaled input row at a time so the hot
        // loop is a contiguous multiply-add over the output row.
        for o in 0..c_out {
            let orow = &mut out[o * out_len..(o + 1) * out_len];
            orow.fill(bv[o]);
            for c in 0..c_in {
                let xrow = &xv[c * len..(c + 1) * len];
                let krow = &kv[(o * c_in + c) * k..(o * c_in + c + 1) * k];
                for (dk, &kval) in krow.iter().enumerate() {
                    let xs = &xrow[dk..dk + out_len];
                    for (ov, &xv_) in orow.iter_mut().zip(xs) {
                        *ov += kval * xv_;
                    }
                }
            }
        }
        let tensor = Tensor::new(&[c_out, out_len], out)?;
        Ok(self.push(tensor, Op::Conv1dValid { x, kernels, bias }))
    }

    /// Window means over [c, len] input; output [c, (len - pool)/stride + 1].
    pub fn avg_pool1d(&mut self, x: NodeId, pool: usize, stride: usize) -> Result<NodeId> {
        let xs = self.nodes[x].value.shape().to_vec();
        if xs.len() != 2 {
            return Err(Error::Dimension(format!(
                "avg_pool1d expects [channels, len], got {:?}",
                xs
            )));
        }
        if pool < 1 || stride < 1 {
            return Err(Error::Argument("pool and stride must be >= 1".into()));
        }
        let (c, len) = (xs[0], xs[1]);
        if len < pool {
            return Err(Error::Dimension(format!(
                "avg_pool1d input length {} shorter than pool {}",
                len, pool
            )));
        }
        let out_len = (len - pool) / stride + 1;
        let xv = self.nodes[x].value.data();
        let mut out = vec![0.0; c * out_len];
        for ch in 0..c {
            let row = &xv[ch * len..(ch + 1) * len];
            for i in 0..out_len {
                let start = i * stride;
                let sum: f64 = row[start..start + pool].iter().sum();
                out[ch * out_len + i] = sum / pool as f64;
            }
        }
        let tensor = Tensor::new(&[c, out_len], out)?;
        Ok(self.push(tensor, Op::AvgPool1d { x, pool, stride }))
    }

    /// Concatenation of 1-D parts in argument order.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Argument("concat of an empty part list".into()));
        }
        let mut out = Vec::new();
        for &p in parts {
            let v = &self.nodes[p].value;
            if v.shape().len() != 1 {
                return Err(Error::Dimension(format!(
                    "concat expects 1-D parts, got {:?}",
                    v.shape()
                )));
            }
            out.extend_from_slice(v.data());
        }
        Ok(self.push(
            Tensor::from_vec(out),
            Op::Concat {
                parts: parts.to_vec(),
            },
        ))
    }

    /// Flattens any tensor to 1-D without reordering data.
    pub fn flatten(&mut self, x: NodeId) -> NodeId {
        let v = self.nodes[x].value.data().to_vec();
        self.push(Tensor::from_vec(v), Op::Reshape { x })
    }

    /// Reinterprets a node under a new shape with equal element count.
    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let t = self.nodes[x].value.reshaped(shape)?;
        Ok(self.push(t, Op::Reshape { x }))
    }

    /// Scalar weighted sum against constant weights; handy for reducing a
    /// vector node to a scalar loss in tests.
    pub fn dot(&mut self, x: NodeId, weights: Tensor) -> Result<NodeId> {
        let xv = &self.nodes[x].value;
        if xv.shape().len() != 1 || weights.shape() != xv.shape() {
            return Err(Error::Dimension(format!(
                "dot expects matching 1-D shapes, got {:?} and {:?}",
                xv.shape(),
                weights.shape()
            )));
        }
        let s: f64 = xv.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum();
        Ok(self.push(Tensor::scalar(s), Op::Dot { x, weights }))
    }

    /// Negative log likelihood of a scalar Gaussian observation:
    /// 0.5 ln(2 pi) + ln sigma + (target - mu)^2 / (2 sigma^2).
    pub fn gaussian_nll(&mut self, mu: NodeId, sigma: NodeId, target: f64) -> Result<NodeId> {
        if !self.nodes[mu].value.is_scalar() || !self.nodes[sigma].value.is_scalar() {
            return Err(Error::Dimension("gaussian_nll expects scalar mu and sigma".into()));
        }
        let m = self.nodes[mu].value.item();
        let s = self.nodes[sigma].value.item();
        if s <= 0.0 {
            return Err(Error::Domain(format!("gaussian_nll requires sigma > 0, got {}", s)));
        }
        let nll = gaussian_nll(m, s, target)?;
        Ok(self.push(Tensor::scalar(nll), Op::GaussianNll { mu, sigma, target }))
    }

    /// Mean squared residual between a prediction node and constant targets.
    pub fn mse(&mut self, pred: NodeId, target: Tensor) -> Result<NodeId> {
        let pv = &self.nodes[pred].value;
        if pv.shape() != target.shape() {
            return Err(Error::Dimension(format!(
                "mse shapes differ: {:?} vs {:?}",
                pv.shape(),
                target.shape()
            )));
        }
        let n = pv.len() as f64;
        let s: f64 = pv
            .data()
            .iter()
            .zip(target.data())
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        Ok(self.push(Tensor::scalar(s / n), Op::Mse { pred, target }))
    }

    /// Arithmetic mean of all entries of a node.
    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let v = &self.nodes[x].value;
        let m = v.data().iter().sum::<f64>() / v.len() as f64;
        self.push(Tensor::scalar(m), Op::Mean { x })
    }

    /// Reverse sweep from a scalar loss node. Returns per-node gradients;
    /// parameter gradients are read off the `Op::Param` leaves.
    ///
    /// The sweep is sequential and allocation-order deterministic:
    /// identical records produce bit-identical gradients.
    pub fn backward(&mut self, loss: NodeId) -> Result<Gradients> {
        if !self.nodes[loss].value.is_scalar() {
            return Err(Error::Argument(format!(
                "backward requires a scalar loss node, got shape {:?}",
                self.nodes[loss].value.shape()
            )));
        }
        let mut grads: Vec<Tensor> = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros(n.value.shape()))
            .collect();
        grads[loss].data_mut()[0] = 1.0;

        for idx in (0..=loss).rev() {
            // Split off the upstream gradient to appease the borrow checker:
            // writes below only touch strictly earlier nodes.
            let g = std::mem::replace(&mut grads[idx], Tensor::zeros(&[0]));
            match &self.nodes[idx].op {
                Op::Input | Op::Param(_) => {}
                Op::Affine { w, x, b } => {
                    let (w, x, b) = (*w, *x, *b);
                    let ws = self.nodes[w].value.shape();
                    let (m, n) = (ws[0], ws[1]);
                    let wv = self.nodes[w].value.data();
                    let xv = self.nodes[x].value.data();
                    let gv = g.data();
                    {
                        let gw = grads[w].data_mut();
                        for i in 0..m {
                            let gi = gv[i];
                            if gi == 0.0 {
                                continue;
                            }
                            let row = &mut gw[i * n..(i + 1) * n];
                            for (rj, xj) in row.iter_mut().zip(xv) {
                                *rj += gi * xj;
                            }
                        }
                    }
                    {
                        let gx = grads[x].data_mut();
                        for i in 0..m {
                            let gi = gv[i];
                            if gi == 0.0 {
                                continue;
                            }
                            let row = &wv[i * n..(i + 1) * n];
                            for (gj, rj) in gx.iter_mut().zip(row) {
                                *gj += gi * rj;
                            }
                        }
                    }
                    {
                        let gb = grads[b].data_mut();
                        for (bi, gi) in gb.iter_mut().zip(gv) {
                            *bi += gi;
                        }
                    }
                }
                Op::Activation { kind, x } => {
                    let (kind, x) = (*kind, *x);
                    let xv = self.nodes[x].value.data();
                    let gx = grads[x].data_mut();
                    for i in 0..xv.len() {
                        gx[i] += g.data()[i] * kind.derivative(xv[i]);
                    }
                }
                Op::Conv1dValid { x, kernels, bias } => {
                    let (x, kernels, bias) = (*x, *kernels, *bias);
                    let xs = self.nodes[x].value.shape().to_vec();
                    let ks = self.nodes[kernels].value.shape().to_vec();
                    let (c_in, len) = (xs[0], xs[1]);
                    let (c_out, k) = (ks[0], ks[2]);
                    let out_len = len - k + 1;
                    let gv = g.data();
                    {
                        // dK[o,c,dk] = dot(g[o,..], x[c, dk..dk+out_len])
                        let xv = self.nodes[x].value.data();
                        let gk = grads[kernels].data_mut();
                        for o in 0..c_out {
                            let grow = &gv[o * out_len..(o + 1) * out_len];
                            for c in 0..c_in {
                                let xrow = &xv[c * len..(c + 1) * len];
                                let krow = &mut gk[(o * c_in + c) * k..(o * c_in + c + 1) * k];
                                for (dk, kg) in krow.iter_mut().enumerate() {
                                    let xs_ = &xrow[dk..dk + out_len];
                                    let mut acc = 0.0;
                                    for (gt, xt) in grow.iter().zip(xs_) {
                                        acc += gt * xt;
                                    }
                                    *kg += acc;
                                }
                            }
                        }
                    }
                    {
                        let gb = grads[bias].data_mut();
                        for o in 0..c_out {
                            gb[o] += gv[o * out_len..(o + 1) * out_len].iter().sum::<f64>();
                        }
                    }
                    {
                        // dx[c, dk..dk+out_len] += K[o,c,dk] * g[o,..]
                        let kv = self.nodes[kernels].value.data();
                        let gx = grads[x].data_mut();
                        for o in 0..c_out {
                            let grow = &gv[o * out_len..(o + 1) * out_len];
                            for c in 0..c_in {
                                let krow = &kv[(o * c_in + c) * k..(o * c_in + c + 1) * k];
                                let xrow = &mut gx[c * len..(c + 1) * len];
                                for (dk, &kval) in krow.iter().enumerate() {
                                    let xs_ = &mut xrow[dk..dk + out_len];
                                    for (xg, gt) in xs_.iter_mut().zip(grow) {
                                        *xg += kval * gt;
                                    }
                                }
                            }
                        }
                    }
                }
                Op::AvgPool1d { x, pool, stride } => {
                    let (x, pool, stride) = (*x, *pool, *stride);
                    let xs = self.nodes[x].value.shape().to_vec();
                    let (c, len) = (xs[0], xs[1]);
                    let out_len = (len - pool) / stride + 1;
                    let gx = grads[x].data_mut();
                    for ch in 0..c {
                        for i in 0..out_len {
                            let go = g.data()[ch * out_len + i] / pool as f64;
                            let start = i * stride;
                            for j in 0..pool {
                                gx[ch * len + start + j] += go;
                            }
                        }
                    }
                }
                Op::Concat { parts } => {
                    let parts = parts.clone();
                    let mut offset = 0;
                    for p in parts {
                        let n = self.nodes[p].value.len();
                        let gp = grads[p].data_mut();
                        for (j, gj) in gp.iter_mut().enumerate().take(n) {
                            *gj += g.data()[offset + j];
                        }
                        offset += n;
                    }
                }
                Op::Reshape { x } => {
                    let x = *x;
                    let gx = grads[x].data_mut();
                    for (a, b) in gx.iter_mut().zip(g.data()) {
                        *a += b;
                    }
                }
                Op::Dot { x, weights } => {
                    let x = *x;
                    let weights = weights.clone();
                    let gs = g.item();
                    let gx = grads[x].data_mut();
                    for (a, w) in gx.iter_mut().zip(weights.data()) {
                        *a += gs * w;
                    }
                }
                Op::GaussianNll { mu, sigma, target } => {
                    let (mu, sigma, target) = (*mu, *sigma, *target);
                    let m = self.nodes[mu].value.item();
                    let s = self.nodes[sigma].value.item();
                    let gs = g.item();
                    let resid = m - target;
                    grads[mu].data_mut()[0] += gs * resid / (s * s);
                    grads[sigma].data_mut()[0] += gs * (1.0 / s - resid * resid / (s * s * s));
                }
                Op::Mse { pred, target } => {
                    let pred = *pred;
                    let target = target.clone();
                    let n = target.len() as f64;
                    let gs = g.item();
                    let pv = self.nodes[pred].value.data().to_vec();
                    let gp = grads[pred].data_mut();
                    for j in 0..pv.len() {
                        gp[j] += gs * 2.0 * (pv[j] - target.data()[j]) / n;
                    }
                }
                Op::Mean { x } => {
                    let x = *x;
                    let n = self.nodes[x].value.len() as f64;
                    let gs = g.item() / n;
                    let gx = grads[x].data_mut();
                    for a in gx.iter_mut() {
                        *a += gs;
                    }
                }
            }
            grads[idx] = g;
        }
        Ok(Gradients { node_grads: grads })
    }

    /// Accumulates parameter-leaf gradients into the store.
    pub fn accumulate_param_grads(&self, grads: &Gradients, store: &mut ParamStore) {
        for (node, pid) in self.param_nodes() {
            store.get_mut(pid).grad.add_assign(grads.node(node));
        }
    }
}

/// Negative log likelihood of y under N(mu, sigma^2), plain-value form.
pub fn gaussian_nll(mu: f64, sigma: f64, y: f64) -> Result<f64> {
    if sigma <= 0.0 {
        return Err(Error::Domain(format!(
            "gaussian_nll requires sigma > 0, got {}",
            sigma
        )));
    }
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let resid = y - mu;
    Ok(half_ln_2pi + sigma.ln() + resid * resid / (2.0 * sigma * sigma))
}

/// Mean squared error between two equal-length vectors, plain-value form.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Dimension(format!(
            "mse lengths differ: {} vs {}",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

/// Central finite differences of a scalar function, coordinate by
/// coordinate: (f(theta + eps e_i) - f(theta - eps e_i)) / (2 eps).
///
/// The testing oracle for every backward implementation in this crate;
/// it never calls into the tape.
pub fn finite_diff_grad(mut f: impl FnMut(&[f64]) -> f64, theta: &[f64], eps: f64) -> Vec<f64> {
    assert!(eps > 0.0, "finite_diff_grad requires eps > 0");
    let mut work = theta.to_vec();
    let mut out = vec![0.0; theta.len()];
    for i in 0..theta.len() {
        let orig = work[i];
        work[i] = orig + eps;
        let up = f(&work);
        work[i] = orig - eps;
        let down = f(&work);
        work[i] = orig;
        out[i] = (up - down) / (2.0 * eps);
    }
    out
}

/// Relative error with a unit floor, used by all gradient checks.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}
