use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{evaluate_with_gradient, project_linf, Classifier, LossKind, Tensor};
use crate::error::Result;

/// Source of attack gradients at an adversarial point.
///
/// A plain model, a model behind averaged input transformations, and a
/// fused ensemble all implement this, so every attack composes with them.
pub trait GradientOracle: Sync {
    fn input_shape(&self) -> &[usize];

    /// Gradient of the attack loss with respect to the input at `x_adv`.
    /// Stochastic oracles draw only from `rng`.
    fn gradient(&self, x_adv: &Tensor, label: usize, rng: &mut ChaCha8Rng) -> Result<Tensor>;
}

/// Plain single-model gradient.
pub struct ModelOracle<'m, M: Classifier + ?Sized> {
    pub model: &'m M,
    pub loss: LossKind,
}

impl<'m, M: Classifier + ?Sized> ModelOracle<'m, M> {
    pub fn new(model: &'m M) -> Self {
        ModelOracle { model, loss: LossKind::CrossEntropy }
    }
}

impl<M: Classifier + ?Sized> GradientOracle for ModelOracle<'_, M> {
    fn input_shape(&self) -> &[usize] {
        self.model.input_shape()
    }

    fn gradient(&self, x_adv: &Tensor, label: usize, _rng: &mut ChaCha8Rng) -> Result<Tensor> {
        evaluate_with_gradient(self.model, x_adv, label, self.loss).map(|(_, g)| g)
    }
}

/// Stream ids of the per-role random streams of one attack.
pub mod streams {
    pub const MAIN: u64 = 0;
    /// Restart `n` of momentum initialisation uses `WARMUP + n`.
    pub const WARMUP: u64 = 1 << 32;
    /// Dual example `n` uses `DUAL + n`.
    pub const DUAL: u64 = 2 << 32;
    /// Model-order shuffles of sequential ensembles.
    pub const SHUFFLE: u64 = 3 << 32;
}

/// Independent ChaCha stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Mixes a base seed with an index (splitmix64 finaliser).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random start: uniform in `[−ε, ε]` per coordinate, then pixel-clamped.
/// Draws exactly `x.len()` values from `rng` in coordinate order.
pub fn uniform_start(x: &Tensor, eps: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let mut d = Tensor::zeros(x.shape());
    for v in d.data_mut() {
        *v = rng.random_range(-eps..=eps);
    }
    project_linf(x, &d, eps)
}
