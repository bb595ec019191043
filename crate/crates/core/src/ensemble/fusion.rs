use std::fmt;
use std::str::FromStr;

use crate::diffcore::{softmax, Graph, NodeId, Tensor};
use crate::error::{Error, Result};

/// How the outputs of several models are combined into one objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum FusionMode {
    /// Sum of per-model cross-entropies.
    Loss,
    /// Cross-entropy of the weighted mean logits.
    #[default]
    Logit,
    /// `−log Σ w_k p_{k,y}`.
    Prediction,
    /// Models attacked one after another.
    Longitude,
}

impl FusionMode {
    pub const ALL: [FusionMode; 4] = [FusionMode::Loss, FusionMode::Logit, FusionMode::Prediction, FusionMode::Longitude];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::Loss => "loss",
            FusionMode::Logit => "logit",
            FusionMode::Prediction => "prediction",
            FusionMode::Longitude => "longitude",
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FusionMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown fusion mode {s:?}")))
    }
}

/// Per-model logits and probabilities for one labelled input.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionView {
    pub logits: Vec<Tensor>,
    pub probs: Vec<Tensor>,
    pub label: usize,
}

impl FusionView {
    pub fn new(logits: Vec<Tensor>, label: usize) -> Result<Self> {
        let Some(first) = logits.first() else {
            return Err(Error::config("fusion needs at least one model"));
        };
        let classes = first.len();
        if classes == 0 || logits.iter().any(|z| z.len() != classes) {
            return Err(Error::config("all models must emit the same nonzero number of logits"));
        }
        if label >= classes {
            return Err(Error::config(format!("label {label} out of range for {classes} classes")));
        }
        let probs = logits.iter().map(|z| Tensor::from_vec(softmax(z.data()))).collect();
        Ok(FusionView { logits, probs, label })
    }

    pub fn models(&self) -> usize {
        self.logits.len()
    }

    pub fn classes(&self) -> usize {
        self.logits[0].len()
    }
}

/// Resolves optional weights to an explicit vector (uniform by default).
pub fn resolve_weights(weights: Option<&[f64]>, k: usize) -> Result<Vec<f64>> {
    match weights {
        None => Ok(vec![1.0 / k as f64; k]),
        Some(w) => {
            if w.len() != k {
                return Err(Error::config(format!("{} weights for {k} models", w.len())));
            }
            if w.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return Err(Error::config("ensemble weights must be finite and nonnegative"));
            }
            let total: f64 = w.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::config(format!("ensemble weights sum to {total}, not 1")));
            }
            Ok(w.to_vec())
        }
    }
}

/// Per-model multipliers of the loss-based sum: exactly 1 for uniform
/// weights, `K · w_k` otherwise.
fn loss_coefficients(weights: Option<&[f64]>, k: usize) -> Result<Vec<f64>> {
    match weights {
        None => Ok(vec![1.0; k]),
        Some(_) => Ok(resolve_weights(weights, k)?.into_iter().map(|w| w * k as f64).collect()),
    }
}

/// Records the fused objective over per-model logits nodes.
pub fn fuse_nodes(
    graph: &mut Graph<'_>,
    logits: &[NodeId],
    label: usize,
    mode: FusionMode,
    weights: Option<&[f64]>,
) -> Result<NodeId> {
    let k = logits.len();
    if k == 0 {
        return Err(Error::config("fusion needs at least one model"));
    }
    match mode {
        FusionMode::Loss => {
            let coef = loss_coefficients(weights, k)?;
            let mut terms = Vec::with_capacity(k);
            for (&z, c) in logits.iter().zip(coef) {
                terms.push((graph.cross_entropy(z, label)?, c));
            }
            graph.weighted_sum(&terms)
        }
        FusionMode::Logit => {
            let w = resolve_weights(weights, k)?;
            let terms: Vec<(NodeId, f64)> = logits.iter().copied().zip(w).collect();
            let mean = graph.weighted_sum(&terms)?;
            graph.cross_entropy(mean, label)
        }
        FusionMode::Prediction => {
            let w = resolve_weights(weights, k)?;
            let mut terms = Vec::with_capacity(k);
            for (&z, wk) in logits.iter().zip(w) {
                let p = graph.softmax(z)?;
                terms.push((graph.pick(p, label)?, wk));
            }
            let py = graph.weighted_sum(&terms)?;
            let lp = graph.log(py)?;
            graph.scale(lp, -1.0)
        }
        FusionMode::Longitude => Err(Error::config("longitude fusion has no single objective")),
    }
}

/// Value of the fused objective.
pub fn fuse_outputs(view: &FusionView, mode: FusionMode, weights: Option<&[f64]>) -> Result<f64> {
    let mut g = Graph::new();
    let ids = view.logits.iter().map(|z| g.leaf_ref(z, false)).collect::<Result<Vec<_>>>()?;
    let out = fuse_nodes(&mut g, &ids, view.label, mode, weights)?;
    Ok(g.value(out).data()[0])
}

/// Reverse-mode `dL/dz_k` of [`fuse_outputs`], one tensor per model.
pub fn autodiff_fusion_gradient(view: &FusionView, mode: FusionMode, weights: Option<&[f64]>) -> Result<Vec<Tensor>> {
    let mut g = Graph::new();
    let ids = view.logits.iter().map(|z| g.leaf_ref(z, true)).collect::<Result<Vec<_>>>()?;
    let out = fuse_nodes(&mut g, &ids, view.label, mode, weights)?;
    let mut grads = g.backward(out)?;
    Ok(ids.iter().map(|&id| grads.take(id).unwrap_or_else(|| Tensor::zeros(&[view.classes()]))).collect())
}

fn onehot(c: usize, y: usize) -> f64 {
    if c == y {
        1.0
    } else {
        0.0
    }
}

/// The closed-form per-model logit gradients quoted for the three lateral
/// strategies, with `p̄_c = (1/K) Σ_m p_{m,c}`:
///
/// * loss: `p_{k,c} − y_c`
/// * logit: `p̄_c − y_c`
/// * prediction: `(p̄_c − y_c)(1 − p_{k,c}) p_{k,c}`
///
/// They assume uniform weights. Only the loss form is the exact derivative
/// of [`fuse_outputs`]; see [`exact_fusion_gradient`] for the others.
pub fn analytic_fusion_gradient(view: &FusionView, mode: FusionMode, weights: Option<&[f64]>) -> Result<Vec<Tensor>> {
    let k = view.models();
    if let Some(w) = weights {
        let u = 1.0 / k as f64;
        resolve_weights(Some(w), k)?;
        if w.iter().any(|&v| (v - u).abs() > 1e-12) {
            return Err(Error::Unsupported("closed-form fusion gradients assume uniform weights".into()));
        }
    }
    let (y, classes) = (view.label, view.classes());
    let mean: Vec<f64> =
        (0..classes).map(|c| view.probs.iter().map(|p| p.data()[c]).sum::<f64>() / k as f64).collect();
    let out = view
        .probs
        .iter()
        .map(|p| {
            let p = p.data();
            Tensor::from_vec(
                (0..classes)
                    .map(|c| match mode {
                        FusionMode::Loss | FusionMode::Longitude => p[c] - onehot(c, y),
                        FusionMode::Logit => mean[c] - onehot(c, y),
                        FusionMode::Prediction => (mean[c] - onehot(c, y)) * (1.0 - p[c]) * p[c],
                    })
                    .collect(),
            )
        })
        .collect();
    Ok(out)
}

/// Exact closed-form derivative of [`fuse_outputs`] with respect to each
/// model's logits, for any valid weights.
pub fn exact_fusion_gradient(view: &FusionView, mode: FusionMode, weights: Option<&[f64]>) -> Result<Vec<Tensor>> {
    let k = view.models();
    let (y, classes) = (view.label, view.classes());
    let out = match mode {
        FusionMode::Loss | FusionMode::Longitude => {
            let coef = if mode == FusionMode::Loss { loss_coefficients(weights, k)? } else { vec![1.0; k] };
            view.probs
                .iter()
                .zip(coef)
                .map(|(p, c)| Tensor::from_vec((0..classes).map(|j| c * (p.data()[j] - onehot(j, y))).collect()))
                .collect()
        }
        FusionMode::Logit => {
            let w = resolve_weights(weights, k)?;
            let mut zbar = vec![0.0; classes];
            for (z, &wk) in view.logits.iter().zip(&w) {
                for (a, &v) in zbar.iter_mut().zip(z.data()) {
                    *a += wk * v;
                }
            }
            let q = softmax(&zbar);
            w.iter().map(|&wk| Tensor::from_vec((0..classes).map(|j| wk * (q[j] - onehot(j, y))).collect())).collect()
        }
        FusionMode::Prediction => {
            let w = resolve_weights(weights, k)?;
            let py: f64 = view.probs.iter().zip(&w).map(|(p, &wk)| wk * p.data()[y]).sum();
            view.probs
                .iter()
                .zip(&w)
                .map(|(p, &wk)| {
                    let p = p.data();
                    Tensor::from_vec((0..classes).map(|j| -wk * p[y] * (onehot(j, y) - p[j]) / py).collect())
                })
                .collect()
        }
    };
    Ok(out)
}
