use crate::diffcore::{forward_logits, Classifier, Tensor};
use crate::error::{Error, Result};
use crate::par::{try_map_indexed, Execution};

/// Per-image result against one victim.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub clean_correct: bool,
    /// Clean-correct and misclassified at `x + δ`.
    pub fooled: bool,
}

pub fn predict<M: Classifier + ?Sized>(model: &M, x: &Tensor) -> Result<usize> {
    Ok(forward_logits(model, x)?.argmax())
}

/// Outcomes of `victim` on `x_i` and `x_i + δ_i`.
pub fn evaluate_outcomes<M: Classifier + ?Sized>(
    victim: &M,
    xs: &[Tensor],
    ys: &[usize],
    deltas: &[Tensor],
    exec: Execution,
) -> Result<Vec<Outcome>> {
    if xs.len() != ys.len() || xs.len() != deltas.len() {
        return Err(Error::config("images, labels and perturbations must align"));
    }
    try_map_indexed(exec, xs.len(), |i| {
        let clean_correct = predict(victim, &xs[i])? == ys[i];
        let fooled = clean_correct && predict(victim, &xs[i].add(&deltas[i]))? != ys[i];
        Ok(Outcome { clean_correct, fooled })
    })
}

/// Fooled fraction among clean-correct images.
pub fn rate_of(outcomes: &[Outcome]) -> Result<f64> {
    let eligible = outcomes.iter().filter(|o| o.clean_correct).count();
    if eligible == 0 {
        return Err(Error::UndefinedRate("the victim misclassifies every clean image".into()));
    }
    Ok(outcomes.iter().filter(|o| o.fooled).count() as f64 / eligible as f64)
}

/// Clean accuracy implied by a set of outcomes.
pub fn clean_accuracy(outcomes: &[Outcome]) -> f64 {
    if outcomes.is_empty() {
        return 0.0;
    }
    outcomes.iter().filter(|o| o.clean_correct).count() as f64 / outcomes.len() as f64
}

/// Attack success rate of `deltas` against `victim`; images the victim
/// already gets wrong are excluded from the denominator.
pub fn success_rate<M: Classifier + ?Sized>(
    victim: &M,
    xs: &[Tensor],
    ys: &[usize],
    deltas: &[Tensor],
    exec: Execution,
) -> Result<f64> {
    rate_of(&evaluate_outcomes(victim, xs, ys, deltas, exec)?)
}
