use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// When a model's gradient counts as conflicting with the others' mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConflictRule {
    /// `cos(g_k, g_avg) < τ`.
    #[default]
    Cosine,
    /// `sign(g_k) · sign(g_avg) < 0`; τ is ignored.
    Sign,
}

/// Whether `g` conflicts with `avg` under `rule`.
pub fn conflicts(g: &Tensor, avg: &Tensor, tau: f64, rule: ConflictRule) -> bool {
    match rule {
        ConflictRule::Cosine => {
            let denom = g.norm_l2() * avg.norm_l2();
            if denom == 0.0 {
                return false;
            }
            g.dot(avg) / denom < tau
        }
        ConflictRule::Sign => g.sign().dot(&avg.sign()) < 0.0,
    }
}

/// `g − (g·a / ‖a‖²) a`
pub fn project_out(g: &Tensor, a: &Tensor) -> Tensor {
    let aa = a.dot(a);
    let mut out = g.clone();
    out.axpy(-g.dot(a) / aa, a);
    out
}

/// Gradient alignment over `K ≥ 2` per-model gradients.
///
/// For each `k`, `g_avg` is the mean of the other original gradients,
/// computed as `(Σ_j g_j − g_k) / (K − 1)`; a
/// conflicting `g_k` is replaced by its component orthogonal to `g_avg`.
/// Non-conflicting gradients are returned unchanged. A zero `g_avg` leaves
/// `g_k` alone.
pub fn align_gradients(grads: &[Tensor], tau: f64, rule: ConflictRule) -> Result<Vec<Tensor>> {
    if grads.len() < 2 {
        return Err(Error::config("gradient alignment needs at least two gradients"));
    }
    if grads.iter().any(|g| !g.same_shape(&grads[0])) {
        return Err(Error::config("gradient alignment needs equally shaped gradients"));
    }
    let mut total = grads[0].clone();
    for g in &grads[1..] {
        total.add_assign(g);
    }
    let others = (grads.len() - 1) as f64;
    let mut out = Vec::with_capacity(grads.len());
    for g in grads {
        // (Σ_j g_j − g_k) / (K − 1)
        let avg = total.zip_map(g, |t, v| (t - v) / others);
        if avg.dot(&avg) > 0.0 && conflicts(g, &avg, tau, rule) {
            out.push(project_out(g, &avg));
        } else {
            out.push(g.clone());
        }
    }
    Ok(out)
}
