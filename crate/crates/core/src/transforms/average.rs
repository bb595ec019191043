use rand_chacha::ChaCha8Rng;

use crate::attacks::GradientOracle;
use crate::diffcore::{evaluate_through, evaluate_with_gradient, mean_of, Classifier, LossKind, Tensor};
use crate::error::Result;
use crate::par::{try_map_indexed, Execution};
use crate::transforms::draw::{AdmixPool, TransformDraw, Transformer};
use crate::transforms::spec::TransformKind;
use crate::transforms::tim::tim_smooth_gradient;

/// Input gradient of the loss at `draw(x)`, pulled back to `x`.
pub fn transformed_gradient<M: Classifier + ?Sized>(
    model: &M,
    x: &Tensor,
    label: usize,
    loss: LossKind,
    draw: &TransformDraw,
) -> Result<Tensor> {
    match draw {
        TransformDraw::Identity => evaluate_with_gradient(model, x, label, loss).map(|(_, g)| g),
        d => evaluate_through(model, x, label, loss, |g, n| d.record(g, n)).map(|(_, g)| g),
    }
}

/// Mean gradient over `copies` transformed copies of `x`.
///
/// Draws are taken from `rng` sequentially; the copies are then evaluated
/// under `exec` and summed in copy order. Deterministic kinds (none, TIM)
/// evaluate a single gradient regardless of `copies`.
#[allow(clippy::too_many_arguments)]
pub fn averaged_transformed_gradient<M: Classifier + ?Sized>(
    model: &M,
    x: &Tensor,
    label: usize,
    transformer: &Transformer,
    copies: usize,
    pool: Option<&AdmixPool>,
    loss: LossKind,
    exec: Execution,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    let spec = transformer.spec();
    match spec.kind {
        TransformKind::None => return evaluate_with_gradient(model, x, label, loss).map(|(_, g)| g),
        TransformKind::Tim => {
            let (_, g) = evaluate_with_gradient(model, x, label, loss)?;
            return tim_smooth_gradient(&g, spec.tim_kernel, spec.tim_sigma);
        }
        _ => {}
    }
    let draws = transformer.sample_copies(copies.max(1), label, pool, rng)?;
    let grads = try_map_indexed(exec, draws.len(), |i| transformed_gradient(model, x, label, loss, &draws[i]))?;
    Ok(mean_of(&grads))
}

/// A model seen through copy-averaged input transformations.
pub struct TransformedOracle<'m, M: Classifier + ?Sized> {
    pub model: &'m M,
    pub transformer: Transformer,
    pub pool: Option<&'m AdmixPool>,
    pub loss: LossKind,
    pub exec: Execution,
}

impl<'m, M: Classifier + ?Sized> TransformedOracle<'m, M> {
    pub fn new(model: &'m M, transformer: Transformer) -> Self {
        TransformedOracle { model, transformer, pool: None, loss: LossKind::CrossEntropy, exec: Execution::Sequential }
    }

    pub fn with_pool(mut self, pool: &'m AdmixPool) -> Self {
        self.pool = Some(pool);
        self
    }
}

impl<M: Classifier + ?Sized> GradientOracle for TransformedOracle<'_, M> {
    fn input_shape(&self) -> &[usize] {
        self.model.input_shape()
    }

    fn gradient(&self, x_adv: &Tensor, label: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        averaged_transformed_gradient(
            self.model,
            x_adv,
            label,
            &self.transformer,
            self.transformer.spec().copies,
            self.pool,
            self.loss,
            self.exec,
            rng,
        )
    }
}
