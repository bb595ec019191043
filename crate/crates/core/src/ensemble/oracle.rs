use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::attacks::{run_sequence_observed, stream_rng, streams, AttackConfig, GradientOracle, Stage};
use crate::diffcore::{Classifier, Graph, Tensor};
use crate::ensemble::ait::{assign_async_transforms, instantiate, AitKind};
use crate::ensemble::align::{align_gradients, ConflictRule};
use crate::ensemble::fusion::{fuse_nodes, resolve_weights, FusionMode};
use crate::error::{Error, Result};
use crate::transforms::TransformDraw;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub fusion: FusionMode,
    /// Per-model weights; `None` is uniform.
    pub weights: Option<Vec<f64>>,
    /// Conflict threshold of gradient alignment.
    pub tau: f64,
    pub conflict: ConflictRule,
    pub ga_enabled: bool,
    /// Independent input transform per model per evaluation.
    pub ait_enabled: bool,
    /// One input transform drawn per evaluation and shared by all models.
    pub aligned_transforms: bool,
    /// Re-draw the model order every iteration (longitude only).
    pub ms_enabled: bool,
    pub ait_pool: Vec<AitKind>,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        EnsembleSpec {
            fusion: FusionMode::Logit,
            weights: None,
            tau: 0.1,
            conflict: ConflictRule::Cosine,
            ga_enabled: false,
            ait_enabled: false,
            aligned_transforms: false,
            ms_enabled: false,
            ait_pool: AitKind::ALL.to_vec(),
        }
    }
}

impl EnsembleSpec {
    pub fn new(fusion: FusionMode) -> Self {
        EnsembleSpec { fusion, ..Default::default() }
    }

    pub fn validate(&self, models: usize) -> Result<()> {
        if models == 0 {
            return Err(Error::config("an ensemble needs at least one model"));
        }
        resolve_weights(self.weights.as_deref(), models)?;
        if !self.tau.is_finite() {
            return Err(Error::config("alignment threshold must be finite"));
        }
        if (self.ait_enabled || self.aligned_transforms) && self.ait_pool.is_empty() {
            return Err(Error::config("transform pool is empty"));
        }
        Ok(())
    }

    /// Compact `+`-joined description of the enabled ensemble tricks.
    pub fn trick_label(&self) -> String {
        let mut parts = vec![format!("ens_{}", self.fusion)];
        if self.ga_enabled {
            parts.push("ga".into());
        }
        if self.ait_enabled {
            parts.push("ait".into());
        } else if self.aligned_transforms {
            parts.push("aligned_t".into());
        }
        if self.ms_enabled {
            parts.push("ms".into());
        }
        parts.join("+")
    }
}

/// Lateral ensemble: all models see the input at once and their outputs
/// are fused into one objective.
pub struct LateralOracle<'m, M: Classifier + ?Sized> {
    models: Vec<&'m M>,
    spec: EnsembleSpec,
    eps: f64,
}

impl<'m, M: Classifier + ?Sized> LateralOracle<'m, M> {
    /// `eps` sets the noise scale of the noise transform.
    pub fn new(models: Vec<&'m M>, spec: EnsembleSpec, eps: f64) -> Result<Self> {
        spec.validate(models.len())?;
        if spec.fusion == FusionMode::Longitude {
            return Err(Error::config("longitude ensembles run through longitude_attack"));
        }
        let shape = models[0].input_shape();
        if models.iter().any(|m| m.input_shape() != shape || m.num_classes() != models[0].num_classes()) {
            return Err(Error::config("ensemble members disagree on input shape or class count"));
        }
        Ok(LateralOracle { models, spec, eps })
    }

    fn draws(&self, rng: &mut ChaCha8Rng) -> Result<Vec<TransformDraw>> {
        let k = self.models.len();
        let shape = self.models[0].input_shape();
        if self.spec.ait_enabled {
            let kinds = assign_async_transforms(&self.spec.ait_pool, k, rng)?;
            kinds.into_iter().map(|kind| instantiate(kind, shape, self.eps, rng)).collect()
        } else if self.spec.aligned_transforms {
            let kind = assign_async_transforms(&self.spec.ait_pool, 1, rng)?[0];
            let d = instantiate(kind, shape, self.eps, rng)?;
            Ok(vec![d; k])
        } else {
            Ok(vec![TransformDraw::Identity; k])
        }
    }

    /// Gradient of the fused objective through each model's branch, in
    /// model order. Their sum is the full input gradient.
    pub fn branch_gradients(&self, x_adv: &Tensor, label: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Tensor>> {
        let draws = self.draws(rng)?;
        let mut g = Graph::new();
        let mut leaves = Vec::with_capacity(self.models.len());
        let mut logits = Vec::with_capacity(self.models.len());
        for (m, d) in self.models.iter().zip(&draws) {
            let leaf = g.leaf(x_adv.clone(), true)?;
            let t = d.record(&mut g, leaf)?;
            logits.push(m.logits(&mut g, t)?);
            leaves.push(leaf);
        }
        let loss = fuse_nodes(&mut g, &logits, label, self.spec.fusion, self.spec.weights.as_deref())?;
        let mut grads = g.backward(loss)?;
        Ok(leaves.iter().map(|&l| grads.take(l).unwrap_or_else(|| Tensor::zeros(x_adv.shape()))).collect())
    }
}

impl<M: Classifier + ?Sized> GradientOracle for LateralOracle<'_, M> {
    fn input_shape(&self) -> &[usize] {
        self.models[0].input_shape()
    }

    fn gradient(&self, x_adv: &Tensor, label: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        let mut branches = self.branch_gradients(x_adv, label, rng)?;
        if self.spec.ga_enabled && branches.len() >= 2 {
            branches = align_gradients(&branches, self.spec.tau, self.spec.conflict)?;
        }
        let mut total = branches[0].clone();
        for b in &branches[1..] {
            total.add_assign(b);
        }
        Ok(total)
    }
}

/// Per-iteration model orders: `0..k` each time, or a fresh uniform
/// permutation per iteration from stream `SHUFFLE` when `shuffle` is set.
pub fn model_orders(k: usize, iters: usize, shuffle: bool, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = stream_rng(seed, streams::SHUFFLE);
    (0..iters)
        .map(|_| {
            let mut order: Vec<usize> = (0..k).collect();
            if shuffle {
                order.shuffle(&mut rng);
            }
            order
        })
        .collect()
}

/// Longitudinal ensemble attack: each iteration steps against every model
/// in turn, carrying δ and momentum. Warm-ups use the loss-based fusion of
/// all models.
pub fn longitude_attack<M: Classifier + ?Sized>(
    models: &[&M],
    spec: &EnsembleSpec,
    x: &Tensor,
    label: usize,
    cfg: &AttackConfig,
    eps: f64,
    seed: u64,
) -> Result<Tensor> {
    longitude_attack_observed(models, spec, x, label, cfg, eps, seed, &mut |_, _| {})
}

#[allow(clippy::too_many_arguments)]
pub fn longitude_attack_observed<M: Classifier + ?Sized>(
    models: &[&M],
    spec: &EnsembleSpec,
    x: &Tensor,
    label: usize,
    cfg: &AttackConfig,
    eps: f64,
    seed: u64,
    observer: &mut dyn FnMut(Stage, &Tensor),
) -> Result<Tensor> {
    spec.validate(models.len())?;
    let member = EnsembleSpec { fusion: FusionMode::Loss, weights: None, ga_enabled: false, ..spec.clone() };
    let singles = models
        .iter()
        .map(|&m| LateralOracle::new(vec![m], member.clone(), eps))
        .collect::<Result<Vec<_>>>()?;
    let all = LateralOracle::new(models.to_vec(), member, eps)?;
    let oracles: Vec<&dyn GradientOracle> = singles.iter().map(|o| o as &dyn GradientOracle).collect();
    let orders = model_orders(models.len(), cfg.effective_iters(), spec.ms_enabled, seed);
    run_sequence_observed(cfg, &oracles, &all, &orders, x, label, seed, observer).map(|s| s.delta)
}
