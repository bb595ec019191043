//! Tensors, reverse-mode gradients, the spectral transform and the L∞
//! projection used by every attack iteration.

mod graph;
mod resample;
mod spectral;
mod tensor;

pub use graph::{log_sum_exp, softmax, Gradients, Graph, NodeId};
pub use resample::SparseMap;
pub use spectral::SpectralPlan;
pub use tensor::{mean_of, numel, sign, Tensor};

use crate::error::{Error, Result};

/// Scalar objective placed on top of a classifier's logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    /// Cross-entropy of the softmaxed logits against the label.
    #[default]
    CrossEntropy,
    /// `max_{c≠y} z_c − z_y`, the logit margin.
    Margin,
}

/// A differentiable classifier that can record its forward pass on a graph.
pub trait Classifier: Sync {
    /// Input shape as `[C, H, W]` (or any shape the model accepts).
    fn input_shape(&self) -> &[usize];
    fn num_classes(&self) -> usize;
    /// Records the forward pass from `input` and returns the logits node.
    /// Parameters are recorded as constant leaves.
    fn logits<'a>(&'a self, graph: &mut Graph<'a>, input: NodeId) -> Result<NodeId>;
}

/// Appends `loss` on top of `logits` and returns the scalar node.
pub fn loss_node(graph: &mut Graph<'_>, logits: NodeId, label: usize, loss: LossKind) -> Result<NodeId> {
    match loss {
        LossKind::CrossEntropy => graph.cross_entropy(logits, label),
        LossKind::Margin => {
            let z = graph.value(logits).data();
            if label >= z.len() || z.len() < 2 {
                return Err(Error::config(format!("label {label} out of range for {} classes", z.len())));
            }
            let mut best = if label == 0 { 1 } else { 0 };
            for (c, &v) in z.iter().enumerate() {
                if c != label && v > z[best] {
                    best = c;
                }
            }
            let other = graph.pick(logits, best)?;
            let own = graph.pick(logits, label)?;
            graph.weighted_sum(&[(other, 1.0), (own, -1.0)])
        }
    }
}

fn check_input<M: Classifier + ?Sized>(model: &M, input: &Tensor, label: usize) -> Result<()> {
    if input.shape() != model.input_shape() {
        return Err(Error::config(format!(
            "input shape {:?} does not match model input {:?}",
            input.shape(),
            model.input_shape()
        )));
    }
    if label >= model.num_classes() {
        return Err(Error::config(format!("label {label} >= class count {}", model.num_classes())));
    }
    Ok(())
}

/// Loss value and its exact gradient with respect to the input, holding the
/// model parameters fixed.
pub fn evaluate_with_gradient<M: Classifier + ?Sized>(
    model: &M,
    input: &Tensor,
    label: usize,
    loss: LossKind,
) -> Result<(f64, Tensor)> {
    evaluate_through(model, input, label, loss, |_, x| Ok(x))
}

/// Like [`evaluate_with_gradient`] but with a differentiable preprocessing
/// stage between the input leaf and the model. The gradient is taken with
/// respect to the raw input, so it is pulled back through the stage.
pub fn evaluate_through<'a, M, F>(
    model: &'a M,
    input: &Tensor,
    label: usize,
    loss: LossKind,
    stage: F,
) -> Result<(f64, Tensor)>
where
    M: Classifier + ?Sized,
    F: FnOnce(&mut Graph<'a>, NodeId) -> Result<NodeId>,
{
    check_input(model, input, label)?;
    let mut g = Graph::new();
    let x = g.leaf(input.clone(), true)?;
    let staged = stage(&mut g, x)?;
    if g.shape(staged) != model.input_shape() {
        return Err(Error::config("preprocessing changed the input extents"));
    }
    let z = model.logits(&mut g, staged)?;
    let l = loss_node(&mut g, z, label, loss)?;
    let value = g.value(l).data()[0];
    let mut grads = g.backward(l)?;
    let grad = grads.take(x).unwrap_or_else(|| Tensor::zeros(input.shape()));
    Ok((value, grad))
}

/// Logits of one input (no gradient bookkeeping).
pub fn forward_logits<M: Classifier + ?Sized>(model: &M, input: &Tensor) -> Result<Tensor> {
    if input.shape() != model.input_shape() {
        return Err(Error::config(format!(
            "input shape {:?} does not match model input {:?}",
            input.shape(),
            model.input_shape()
        )));
    }
    let mut g = Graph::new();
    let x = g.leaf_ref(input, false)?;
    let z = model.logits(&mut g, x)?;
    Ok(g.value(z).clone())
}

/// Central differences `(f(x + h eᵢ) − f(x − h eᵢ)) / 2h` at the listed
/// flat coordinates.
pub fn finite_difference_gradient<F>(f: F, x: &Tensor, h: f64, coords: &[usize]) -> Result<Vec<f64>>
where
    F: Fn(&Tensor) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::config("finite difference step must be positive"));
    }
    if let Some(&bad) = coords.iter().find(|&&c| c >= x.len()) {
        return Err(Error::config(format!("coordinate {bad} out of range {}", x.len())));
    }
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(coords.len());
    for &i in coords {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let fp = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let fm = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::Divergence(format!("objective non-finite at coordinate {i}")));
        }
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}

/// Clamps `delta` into the ε-box, then so that `x + delta` stays in `[0, 1]`.
pub fn project_linf(x: &Tensor, delta: &Tensor, eps: f64) -> Tensor {
    assert!(x.same_shape(delta), "project_linf shape mismatch");
    x.zip_map(delta, |xv, dv| clamp_coord(xv, dv, eps))
}

/// In-place form of [`project_linf`].
pub fn project_linf_in_place(x: &Tensor, delta: &mut Tensor, eps: f64) {
    assert!(x.same_shape(delta), "project_linf shape mismatch");
    for (d, &xv) in delta.data_mut().iter_mut().zip(x.data()) {
        *d = clamp_coord(xv, *d, eps);
    }
}

#[inline]
fn clamp_coord(x: f64, d: f64, eps: f64) -> f64 {
    let d = d.clamp(-eps, eps);
    (x + d).clamp(0.0, 1.0) - x
}
