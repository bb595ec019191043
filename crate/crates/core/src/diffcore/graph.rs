//! Tape-based reverse-mode differentiation.
//!
//! Nodes are evaluated eagerly as they are appended, so construction order is
//! a topological order and backward is a single reverse sweep. Leaves may
//! borrow their tensors (model weights) for the lifetime of the graph.

use std::sync::Arc;

use crate::diffcore::resample::SparseMap;
use crate::diffcore::spectral::SpectralPlan;
use crate::diffcore::tensor::{numel, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Value<'a> {
    Owned(Tensor),
    Borrowed(&'a Tensor),
}

impl Value<'_> {
    fn get(&self) -> &Tensor {
        match self {
            Value::Owned(t) => t,
            Value::Borrowed(t) => t,
        }
    }
}

enum Op<'a> {
    Leaf,
    Dense { x: NodeId, w: NodeId, b: NodeId },
    Conv2d { x: NodeId, w: NodeId, b: NodeId, pad: usize },
    Relu(NodeId),
    AvgPool { x: NodeId, k: usize },
    Reshape(NodeId),
    CrossEntropy { logits: NodeId, label: usize, probs: Vec<f64> },
    Softmax(NodeId),
    Log(NodeId),
    Scale(NodeId, f64),
    MulConst(NodeId, Value<'a>),
    AddConst(NodeId),
    WeightedSum(Vec<(NodeId, f64)>),
    Pick(NodeId, usize),
    Dct2(NodeId, Arc<SpectralPlan>),
    Idct2(NodeId, Arc<SpectralPlan>),
    Resample(NodeId, Arc<SparseMap>),
}

struct Node<'a> {
    op: Op<'a>,
    value: Value<'a>,
    needs_grad: bool,
}

/// A computation recorded in construction order.
#[derive(Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

/// Gradients of a scalar output with respect to every node that needs one.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads[id.0].take()
    }
}

impl<'a> Graph<'a> {
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
        self.nodes[id.0].value.get()
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.value(id).shape()
    }

    fn push(&mut self, op: Op<'a>, value: Value<'a>, needs_grad: bool) -> Result<NodeId> {
        let idx = self.nodes.len();
        if !value.get().is_finite() {
            return Err(Error::Numeric { node: idx, msg: "non-finite value in forward pass".into() });
        }
        self.nodes.push(Node { op, value, needs_grad });
        Ok(NodeId(idx))
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].needs_grad)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<NodeId> {
        self.push(Op::Leaf, Value::Owned(value), requires_grad)
    }

    pub fn leaf_ref(&mut self, value: &'a Tensor, requires_grad: bool) -> Result<NodeId> {
        self.push(Op::Leaf, Value::Borrowed(value), requires_grad)
    }

    /// `W · flatten(x) + b` with `W: [out, in]`, `b: [out]`.
    pub fn dense(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let ws = wv.shape();
        if ws.len() != 2 || ws[1] != xv.len() || bv.shape() != [ws[0]] {
            return Err(Error::config(format!(
                "dense: weight {:?}, bias {:?}, input {:?}",
                ws,
                bv.shape(),
                xv.shape()
            )));
        }
        let (out, inp) = (ws[0], ws[1]);
        let (xd, wd) = (xv.data(), wv.data());
        let mut y = bv.data().to_vec();
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &wd[o * inp..(o + 1) * inp];
            *yo += row.iter().zip(xd).map(|(a, b)| a * b).sum::<f64>();
        }
        let needs = self.needs(&[x, w, b]);
        self.push(Op::Dense { x, w, b }, Value::Owned(Tensor::new(vec![out], y)?), needs)
    }

    /// 2D cross-correlation, `x: [C,H,W]`, `w: [O,C,K,K]`, zero padding `pad`.
    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: NodeId, pad: usize) -> Result<NodeId> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let (xs, ws) = (xv.shape(), wv.shape());
        if xs.len() != 3 || ws.len() != 4 || ws[1] != xs[0] || ws[2] != ws[3] || bv.shape() != [ws[0]] {
            return Err(Error::config(format!("conv2d: input {xs:?}, weight {ws:?}")));
        }
        let (c, h, wd) = (xs[0], xs[1] + 2 * pad, xs[2] + 2 * pad);
        let (o, k) = (ws[0], ws[2]);
        if k > h || k > wd {
            return Err(Error::config("conv2d: kernel larger than input"));
        }
        let (oh, ow) = (h - k + 1, wd - k + 1);
        let xp = padded(xv, pad);
        let wdat = wv.data();
        let mut y = vec![0.0; o * oh * ow];
        for oc in 0..o {
            let yo = &mut y[oc * oh * ow..(oc + 1) * oh * ow];
            yo.fill(bv.data()[oc]);
            for ic in 0..c {
                let xc = &xp[ic * h * wd..(ic + 1) * h * wd];
                for ki in 0..k {
                    for kj in 0..k {
                        let wv = wdat[((oc * c + ic) * k + ki) * k + kj];
                        for i in 0..oh {
                            let src = &xc[(i + ki) * wd + kj..(i + ki) * wd + kj + ow];
                            let dst = &mut yo[i * ow..(i + 1) * ow];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += wv * s;
                            }
                        }
                    }
                }
            }
        }
        let needs = self.needs(&[x, w, b]);
        self.push(Op::Conv2d { x, w, b, pad }, Value::Owned(Tensor::new(vec![o, oh, ow], y)?), needs)
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let y = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        let needs = self.needs(&[x]);
        self.push(Op::Relu(x), Value::Owned(y), needs)
    }

    /// Non-overlapping `k × k` average pooling on `[C,H,W]` (remainder rows dropped).
    pub fn avg_pool(&mut self, x: NodeId, k: usize) -> Result<NodeId> {
        let xv = self.value(x);
        let s = xv.shape();
        if s.len() != 3 || k == 0 || s[1] < k || s[2] < k {
            return Err(Error::config(format!("avg_pool {k} on {s:?}")));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let (oh, ow) = (h / k, w / k);
        let inv = 1.0 / (k * k) as f64;
        let d = xv.data();
        let mut y = vec![0.0; c * oh * ow];
        for ch in 0..c {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = 0.0;
                    for a in 0..k {
                        for bb in 0..k {
                            acc += d[(ch * h + i * k + a) * w + j * k + bb];
                        }
                    }
                    y[(ch * oh + i) * ow + j] = acc * inv;
                }
            }
        }
        let needs = self.needs(&[x]);
        self.push(Op::AvgPool { x, k }, Value::Owned(Tensor::new(vec![c, oh, ow], y)?), needs)
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let y = self.value(x).clone().reshape(shape)?;
        let needs = self.needs(&[x]);
        self.push(Op::Reshape(x), Value::Owned(y), needs)
    }

    /// `-log softmax(z)[label]` as a scalar.
    pub fn cross_entropy(&mut self, logits: NodeId, label: usize) -> Result<NodeId> {
        let z = self.value(logits).data();
        if label >= z.len() {
            return Err(Error::config(format!("label {label} out of range for {} classes", z.len())));
        }
        let probs = softmax(z);
        let lse = log_sum_exp(z);
        let loss = lse - z[label];
        let needs = self.needs(&[logits]);
        self.push(Op::CrossEntropy { logits, label, probs }, Value::Owned(Tensor::scalar(loss)), needs)
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = self.value(x);
        let y = Tensor::new(xv.shape().to_vec(), softmax(xv.data()))?;
        let needs = self.needs(&[x]);
        self.push(Op::Softmax(x), Value::Owned(y), needs)
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        let y = self.value(x).map(f64::ln);
        let needs = self.needs(&[x]);
        self.push(Op::Log(x), Value::Owned(y), needs)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let y = self.value(x).scale(c);
        let needs = self.needs(&[x]);
        self.push(Op::Scale(x, c), Value::Owned(y), needs)
    }

    /// Elementwise product with a constant.
    pub fn mul_const(&mut self, x: NodeId, m: Tensor) -> Result<NodeId> {
        self.check_same(x, &m, "mul_const")?;
        let y = self.value(x).zip_map(&m, |a, b| a * b);
        let needs = self.needs(&[x]);
        self.push(Op::MulConst(x, Value::Owned(m)), Value::Owned(y), needs)
    }

    /// Elementwise sum with a constant.
    pub fn add_const(&mut self, x: NodeId, c: Tensor) -> Result<NodeId> {
        self.check_same(x, &c, "add_const")?;
        let y = self.value(x).add(&c);
        let needs = self.needs(&[x]);
        self.push(Op::AddConst(x), Value::Owned(y), needs)
    }

    pub fn add_const_ref(&mut self, x: NodeId, c: &'a Tensor) -> Result<NodeId> {
        self.check_same(x, c, "add_const")?;
        let y = self.value(x).add(c);
        let needs = self.needs(&[x]);
        self.push(Op::AddConst(x), Value::Owned(y), needs)
    }

    fn check_same(&self, x: NodeId, t: &Tensor, what: &str) -> Result<()> {
        if self.shape(x) != t.shape() {
            return Err(Error::config(format!("{what}: {:?} vs {:?}", self.shape(x), t.shape())));
        }
        Ok(())
    }

    /// `Σ w_i · x_i` over equally shaped nodes.
    pub fn weighted_sum(&mut self, terms: &[(NodeId, f64)]) -> Result<NodeId> {
        let Some(&(first, _)) = terms.first() else {
            return Err(Error::config("weighted_sum of nothing"));
        };
        let shape = self.shape(first).to_vec();
        let mut y = Tensor::zeros(&shape);
        for &(id, w) in terms {
            if self.shape(id) != shape.as_slice() {
                return Err(Error::config("weighted_sum shape mismatch"));
            }
            y.axpy(w, self.value(id));
        }
        let ids: Vec<NodeId> = terms.iter().map(|t| t.0).collect();
        let needs = self.needs(&ids);
        self.push(Op::WeightedSum(terms.to_vec()), Value::Owned(y), needs)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.weighted_sum(&[(a, 1.0), (b, 1.0)])
    }

    /// Scalar element `x[index]` of the flattened node.
    pub fn pick(&mut self, x: NodeId, index: usize) -> Result<NodeId> {
        let xv = self.value(x);
        if index >= xv.len() {
            return Err(Error::config(format!("pick {index} of {}", xv.len())));
        }
        let y = Tensor::scalar(xv.data()[index]);
        let needs = self.needs(&[x]);
        self.push(Op::Pick(x, index), Value::Owned(y), needs)
    }

    pub fn dct2(&mut self, x: NodeId, plan: Arc<SpectralPlan>) -> Result<NodeId> {
        let y = plan.dct2(self.value(x))?;
        let needs = self.needs(&[x]);
        self.push(Op::Dct2(x, plan), Value::Owned(y), needs)
    }

    pub fn idct2(&mut self, x: NodeId, plan: Arc<SpectralPlan>) -> Result<NodeId> {
        let y = plan.idct2(self.value(x))?;
        let needs = self.needs(&[x]);
        self.push(Op::Idct2(x, plan), Value::Owned(y), needs)
    }

    pub fn resample(&mut self, x: NodeId, map: Arc<SparseMap>) -> Result<NodeId> {
        let y = map.apply(self.value(x))?;
        let needs = self.needs(&[x]);
        self.push(Op::Resample(x, map), Value::Owned(y), needs)
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, output: NodeId) -> Result<Gradients> {
        if numel(self.shape(output)) != 1 {
            return Err(Error::config(format!(
                "backward needs a scalar output, got {:?}",
                self.shape(output)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::full(self.shape(output), 1.0));
        for idx in (0..=output.0).rev() {
            let Some(gy) = grads[idx].take() else { continue };
            if !self.nodes[idx].needs_grad {
                continue;
            }
            self.backprop_node(idx, &gy, &mut grads)?;
            if !gy.is_finite() {
                return Err(Error::Numeric { node: idx, msg: "non-finite gradient".into() });
            }
            grads[idx] = Some(gy);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        match &mut grads[id.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn backprop_node(&self, idx: usize, gy: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Dense { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (out, inp) = (wv.shape()[0], wv.shape()[1]);
                let gd = gy.data();
                if self.wants(*x) {
                    let mut dx = vec![0.0; inp];
                    for (o, &g) in gd.iter().enumerate() {
                        let row = &wv.data()[o * inp..(o + 1) * inp];
                        for (d, wvv) in dx.iter_mut().zip(row) {
                            *d += g * wvv;
                        }
                    }
                    self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx)?);
                }
                if self.wants(*w) {
                    let mut dw = vec![0.0; out * inp];
                    for (o, &g) in gd.iter().enumerate() {
                        for (d, xvv) in dw[o * inp..(o + 1) * inp].iter_mut().zip(xv.data()) {
                            *d = g * xvv;
                        }
                    }
                    self.accumulate(grads, *w, Tensor::new(vec![out, inp], dw)?);
                }
                if self.wants(*b) {
                    self.accumulate(grads, *b, gy.clone());
                }
            }
            Op::Conv2d { x, w, b, pad } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (xs, ws) = (xv.shape(), wv.shape());
                let pad = *pad;
                let (c, h, wd) = (xs[0], xs[1] + 2 * pad, xs[2] + 2 * pad);
                let (o, k) = (ws[0], ws[2]);
                let (oh, ow) = (h - k + 1, wd - k + 1);
                let gd = gy.data();
                let wdat = wv.data();
                if self.wants(*x) {
                    let mut dxp = vec![0.0; c * h * wd];
                    for oc in 0..o {
                        let go = &gd[oc * oh * ow..(oc + 1) * oh * ow];
                        for ic in 0..c {
                            let dxc = &mut dxp[ic * h * wd..(ic + 1) * h * wd];
                            for ki in 0..k {
                                for kj in 0..k {
                                    let wv = wdat[((oc * c + ic) * k + ki) * k + kj];
                                    for i in 0..oh {
                                        let dst = &mut dxc[(i + ki) * wd + kj..(i + ki) * wd + kj + ow];
                                        let src = &go[i * ow..(i + 1) * ow];
                                        for (d, s) in dst.iter_mut().zip(src) {
                                            *d += wv * s;
                                        }
                                    }
                                }
                            }
                        }
                    }
                    let dx = unpadded(&dxp, c, xs[1], xs[2], pad);
                    self.accumulate(grads, *x, Tensor::new(xs.to_vec(), dx)?);
                }
                if self.wants(*w) {
                    let xp = padded(xv, pad);
                    let mut dw = vec![0.0; wv.len()];
                    for oc in 0..o {
                        let go = &gd[oc * oh * ow..(oc + 1) * oh * ow];
                        for ic in 0..c {
                            let xc = &xp[ic * h * wd..(ic + 1) * h * wd];
                            for ki in 0..k {
                                for kj in 0..k {
                                    let mut acc = 0.0;
                                    for i in 0..oh {
                                        let src = &xc[(i + ki) * wd + kj..(i + ki) * wd + kj + ow];
                                        let gg = &go[i * ow..(i + 1) * ow];
                                        acc += src.iter().zip(gg).map(|(a, b)| a * b).sum::<f64>();
                                    }
                                    dw[((oc * c + ic) * k + ki) * k + kj] = acc;
                                }
                            }
                        }
                    }
                    self.accumulate(grads, *w, Tensor::new(ws.to_vec(), dw)?);
                }
                if self.wants(*b) {
                    let db: Vec<f64> = (0..o).map(|oc| gd[oc * oh * ow..(oc + 1) * oh * ow].iter().sum()).collect();
                    self.accumulate(grads, *b, Tensor::new(vec![o], db)?);
                }
            }
            Op::Relu(x) => {
                let dx = self.value(*x).zip_map(gy, |v, g| if v > 0.0 { g } else { 0.0 });
                self.accumulate(grads, *x, dx);
            }
            Op::AvgPool { x, k } => {
                let xs = self.value(*x).shape().to_vec();
                let (c, h, w) = (xs[0], xs[1], xs[2]);
                let (oh, ow) = (h / k, w / k);
                let inv = 1.0 / (k * k) as f64;
                let mut dx = vec![0.0; c * h * w];
                let gd = gy.data();
                for ch in 0..c {
                    for i in 0..oh * k {
                        for j in 0..ow * k {
                            dx[(ch * h + i) * w + j] = gd[(ch * oh + i / k) * ow + j / k] * inv;
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::new(xs, dx)?);
            }
            Op::Reshape(x) => {
                let dx = gy.clone().reshape(self.shape(*x))?;
                self.accumulate(grads, *x, dx);
            }
            Op::CrossEntropy { logits, label, probs } => {
                let g = gy.data()[0];
                let mut dz: Vec<f64> = probs.iter().map(|p| p * g).collect();
                dz[*label] -= g;
                self.accumulate(grads, *logits, Tensor::new(self.shape(*logits).to_vec(), dz)?);
            }
            Op::Softmax(x) => {
                let y = node.value.get();
                let inner = y.dot(gy);
                let dx = y.zip_map(gy, |p, g| p * (g - inner));
                self.accumulate(grads, *x, dx);
            }
            Op::Log(x) => {
                let dx = self.value(*x).zip_map(gy, |v, g| g / v);
                self.accumulate(grads, *x, dx);
            }
            Op::Scale(x, c) => self.accumulate(grads, *x, gy.scale(*c)),
            Op::MulConst(x, m) => self.accumulate(grads, *x, gy.zip_map(m.get(), |g, m| g * m)),
            Op::AddConst(x) => self.accumulate(grads, *x, gy.clone()),
            Op::WeightedSum(terms) => {
                for &(id, w) in terms {
                    self.accumulate(grads, id, gy.scale(w));
                }
            }
            Op::Pick(x, index) => {
                let mut dx = Tensor::zeros(self.shape(*x));
                dx.data_mut()[*index] = gy.data()[0];
                self.accumulate(grads, *x, dx);
            }
            Op::Dct2(x, plan) => {
                let dx = plan.idct2(gy)?;
                self.accumulate(grads, *x, dx);
            }
            Op::Idct2(x, plan) => {
                let dx = plan.dct2(gy)?;
                self.accumulate(grads, *x, dx);
            }
            Op::Resample(x, map) => {
                let dx = map.adjoint(gy)?;
                self.accumulate(grads, *x, dx);
            }
        }
        Ok(())
    }
}

fn padded(x: &Tensor, pad: usize) -> std::borrow::Cow<'_, [f64]> {
    if pad == 0 {
        return std::borrow::Cow::Borrowed(x.data());
    }
    let s = x.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    let mut out = vec![0.0; c * hp * wp];
    for ch in 0..c {
        for i in 0..h {
            let src = &x.data()[(ch * h + i) * w..(ch * h + i + 1) * w];
            let start = (ch * hp + i + pad) * wp + pad;
            out[start..start + w].copy_from_slice(src);
        }
    }
    std::borrow::Cow::Owned(out)
}

fn unpadded(xp: &[f64], c: usize, h: usize, w: usize, pad: usize) -> Vec<f64> {
    if pad == 0 {
        return xp.to_vec();
    }
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for i in 0..h {
            let start = (ch * hp + i + pad) * wp + pad;
            out[(ch * h + i) * w..(ch * h + i + 1) * w].copy_from_slice(&xp[start..start + w]);
        }
    }
    out
}

pub fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
