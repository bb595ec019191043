use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::diffcore::{Graph, NodeId, SparseMap, SpectralPlan, Tensor};
use crate::error::{Error, Result};
use crate::transforms::mask::{highfreq_mask, FrequencyMask};
use crate::transforms::spec::{TransformKind, TransformSpec};

/// One sampled transformation with fixed parameters. Every variant is an
/// affine map of the input, so the gradient pulls back through its adjoint.
#[derive(Debug, Clone)]
pub enum TransformDraw {
    Identity,
    /// Bilinear resampling (resize, pad, shift, rotation, ...).
    Resample(Arc<SparseMap>),
    /// `scale · (x ⊙ mul) + add`.
    Affine { scale: f64, mul: Option<Tensor>, add: Option<Tensor> },
    /// `IDCT(DCT(x) ⊙ mul + add)`.
    Spectral { plan: Arc<SpectralPlan>, mul: Tensor, add: Tensor },
}

impl TransformDraw {
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            TransformDraw::Identity => Ok(x.clone()),
            TransformDraw::Resample(map) => map.apply(x),
            TransformDraw::Affine { scale, mul, add } => {
                let mut y = match mul {
                    Some(m) => checked(x, m)?.zip_map(m, |a, b| a * b),
                    None => x.clone(),
                };
                if *scale != 1.0 {
                    y = y.scale(*scale);
                }
                if let Some(a) = add {
                    y = checked(&y, a)?.add(a);
                }
                Ok(y)
            }
            TransformDraw::Spectral { plan, .. } => {
                let c = plan.dct2(x)?;
                plan.idct2(&self.spectral_coefficients(&c)?)
            }
        }
    }

    /// Coefficient-domain part of a spectral draw. Coefficients with unit
    /// gain and zero offset are copied through untouched.
    pub fn spectral_coefficients(&self, coeffs: &Tensor) -> Result<Tensor> {
        let TransformDraw::Spectral { mul, add, .. } = self else {
            return Err(Error::config("not a spectral draw"));
        };
        checked(coeffs, mul)?;
        let data = coeffs
            .data()
            .iter()
            .zip(mul.data().iter().zip(add.data()))
            .map(|(&c, (&m, &a))| if m == 1.0 && a == 0.0 { c } else { c * m + a })
            .collect();
        Tensor::new(coeffs.shape().to_vec(), data)
    }

    /// Records the transform on `graph` and returns the transformed node.
    pub fn record<'a>(&self, graph: &mut Graph<'a>, x: NodeId) -> Result<NodeId> {
        match self {
            TransformDraw::Identity => Ok(x),
            TransformDraw::Resample(map) => graph.resample(x, map.clone()),
            TransformDraw::Affine { scale, mul, add } => {
                let mut y = x;
                if let Some(m) = mul {
                    y = graph.mul_const(y, m.clone())?;
                }
                if *scale != 1.0 {
                    y = graph.scale(y, *scale)?;
                }
                if let Some(a) = add {
                    y = graph.add_const(y, a.clone())?;
                }
                Ok(y)
            }
            TransformDraw::Spectral { plan, mul, add } => {
                let c = graph.dct2(x, plan.clone())?;
                let c = graph.mul_const(c, mul.clone())?;
                let c = graph.add_const(c, add.clone())?;
                graph.idct2(c, plan.clone())
            }
        }
    }
}

fn checked<'t>(x: &'t Tensor, other: &Tensor) -> Result<&'t Tensor> {
    if !x.same_shape(other) {
        return Err(Error::config(format!("transform operand {:?} vs input {:?}", other.shape(), x.shape())));
    }
    Ok(x)
}

/// Images available to Admix, indexed by class.
#[derive(Debug, Clone, Default)]
pub struct AdmixPool {
    images: Vec<Tensor>,
    labels: Vec<usize>,
}

impl AdmixPool {
    pub fn new(images: Vec<Tensor>, labels: Vec<usize>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::config("admix pool: image and label counts differ"));
        }
        Ok(AdmixPool { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Uniform draw among pool images whose label differs from `label`.
    pub fn draw_other(&self, label: usize, rng: &mut ChaCha8Rng) -> Result<&Tensor> {
        let others = self.labels.iter().filter(|&&l| l != label).count();
        if others == 0 {
            return Err(Error::config(format!("admix pool has no image outside class {label}")));
        }
        let k = rng.random_range(0..others);
        let i = self.labels.iter().enumerate().filter(|(_, &l)| l != label).nth(k).map(|(i, _)| i);
        Ok(&self.images[i.expect("k < others")])
    }
}

/// SSA+ operation chosen for one copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralOp {
    Scale,
    Noise,
    Dropout,
}

/// A [`TransformSpec`] bound to an input shape and budget, with the mask
/// and spectral plan precomputed.
#[derive(Debug, Clone)]
pub struct Transformer {
    spec: TransformSpec,
    shape: Vec<usize>,
    eps: f64,
    plan: Option<Arc<SpectralPlan>>,
    mask: Option<FrequencyMask>,
}

impl Transformer {
    /// `shape` is the `[C, H, W]` input shape; `eps` scales spectral noise.
    pub fn new(spec: TransformSpec, shape: &[usize], eps: f64) -> Result<Self> {
        spec.validate()?;
        if shape.len() != 3 || shape.iter().any(|&s| s == 0) {
            return Err(Error::config(format!("transforms expect a [C,H,W] shape, got {shape:?}")));
        }
        let (h, w) = (shape[1], shape[2]);
        let spectral =
            matches!(spec.kind, TransformKind::Ssa | TransformKind::SsaH | TransformKind::SsaPlus);
        let plan = if spectral { Some(Arc::new(SpectralPlan::new(h, w)?)) } else { None };
        let mask = match spec.kind {
            TransformKind::SsaH | TransformKind::SsaPlus => Some(highfreq_mask(h, w, spec.rho)?),
            _ => None,
        };
        Ok(Transformer { spec, shape: shape.to_vec(), eps, plan, mask })
    }

    pub fn spec(&self) -> &TransformSpec {
        &self.spec
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn mask(&self) -> Option<&FrequencyMask> {
        self.mask.as_ref()
    }

    /// Draws the transforms for copies `0..copies` of one gradient
    /// evaluation, consuming `rng` in copy order.
    pub fn sample_copies(
        &self,
        copies: usize,
        label: usize,
        pool: Option<&AdmixPool>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<TransformDraw>> {
        let mixes: Vec<Tensor> = if self.spec.kind == TransformKind::Admix {
            let pool = pool.ok_or_else(|| Error::config("admix needs an other-class image pool"))?;
            (0..self.spec.admix_count).map(|_| pool.draw_other(label, rng).cloned()).collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        (0..copies).map(|i| self.sample_one(i, &mixes, rng)).collect()
    }

    fn sample_one(&self, copy: usize, mixes: &[Tensor], rng: &mut ChaCha8Rng) -> Result<TransformDraw> {
        let s = &self.spec;
        let sim_gain = 0.5f64.powi((copy % s.sim_scales) as i32);
        Ok(match s.kind {
            TransformKind::None | TransformKind::Tim => TransformDraw::Identity,
            TransformKind::Dim => self.sample_dim(rng),
            TransformKind::Sim => TransformDraw::Affine { scale: sim_gain, mul: None, add: None },
            TransformKind::Admix => {
                let mix = &mixes[(copy / s.sim_scales) % mixes.len()];
                TransformDraw::Affine { scale: sim_gain, mul: None, add: Some(mix.scale(sim_gain * s.admix_eta)) }
            }
            TransformKind::Ssa | TransformKind::SsaH => self.sample_ssa(rng)?,
            TransformKind::SsaPlus => {
                let op = match rng.random_range(0..3) {
                    0 => SpectralOp::Scale,
                    1 => SpectralOp::Noise,
                    _ => SpectralOp::Dropout,
                };
                self.sample_ssa_plus(op, rng)
            }
        })
    }

    fn sample_dim(&self, rng: &mut ChaCha8Rng) -> TransformDraw {
        let (h, w) = (self.shape[1], self.shape[2]);
        if rng.random::<f64>() >= self.spec.dim_prob {
            return TransformDraw::Identity;
        }
        let ph = ((self.spec.dim_pad * h as f64).round() as usize).max(h);
        let pw = ((self.spec.dim_pad * w as f64).round() as usize).max(w);
        let rh = rng.random_range(h..=ph);
        let rw = rng.random_range(w..=pw);
        let top = rng.random_range(0..=ph - rh);
        let left = rng.random_range(0..=pw - rw);
        let map = SparseMap::resize((h, w), (rh, rw))
            .then(&SparseMap::pad((rh, rw), (ph, pw), top, left))
            .and_then(|m| m.then(&SparseMap::resize((ph, pw), (h, w))))
            .expect("extents chain by construction");
        TransformDraw::Resample(Arc::new(map))
    }

    fn plan(&self) -> Arc<SpectralPlan> {
        self.plan.clone().expect("spectral kinds carry a plan")
    }

    /// Per-coefficient selection broadcast over channels.
    fn in_support(&self, flat: usize) -> bool {
        let hw = self.shape[1] * self.shape[2];
        self.mask.as_ref().is_none_or(|m| m.selected[flat % hw])
    }

    fn sample_ssa(&self, rng: &mut ChaCha8Rng) -> Result<TransformDraw> {
        let plan = self.plan();
        let std = self.spec.ssa_sigma * self.eps;
        let mut xi = Tensor::zeros(&self.shape);
        if std > 0.0 {
            let normal = Normal::new(0.0, std).map_err(|e| Error::config(e.to_string()))?;
            for v in xi.data_mut() {
                *v = normal.sample(rng);
            }
        }
        let xi_c = plan.dct2(&xi)?;
        let a = self.spec.ssa_amp;
        let mut mul = Tensor::full(&self.shape, 1.0);
        let mut add = Tensor::zeros(&self.shape);
        for i in 0..mul.len() {
            let m = rng.random_range(1.0 - a..=1.0 + a);
            if self.in_support(i) {
                mul.data_mut()[i] = m;
                add.data_mut()[i] = xi_c.data()[i] * m;
            }
        }
        Ok(TransformDraw::Spectral { plan, mul, add })
    }

    /// SSA+ draw with a fixed operation.
    pub fn sample_ssa_plus(&self, op: SpectralOp, rng: &mut ChaCha8Rng) -> TransformDraw {
        let mut mul = Tensor::full(&self.shape, 1.0);
        let mut add = Tensor::zeros(&self.shape);
        let support: Vec<usize> = (0..mul.len()).filter(|&i| self.in_support(i)).collect();
        match op {
            SpectralOp::Scale => {
                let alpha = rng.random::<f64>();
                for &i in &support {
                    mul.data_mut()[i] = alpha;
                }
            }
            SpectralOp::Noise => {
                let r = self.spec.ssa_sigma * self.eps;
                for &i in &support {
                    add.data_mut()[i] = if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
                }
            }
            SpectralOp::Dropout => {
                let k = dropout_count(self.spec.dropout_frac, support.len());
                for j in sample(rng, support.len(), k) {
                    mul.data_mut()[support[j]] = 0.0;
                }
            }
        }
        TransformDraw::Spectral { plan: self.plan(), mul, add }
    }

    /// One transformed copy of `x` (copy index selects the SIM scale).
    pub fn apply(
        &self,
        x: &Tensor,
        copy: usize,
        label: usize,
        pool: Option<&AdmixPool>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Tensor> {
        let mut draws = self.sample_copies(copy + 1, label, pool, rng)?;
        draws.pop().expect("at least one copy").apply(x)
    }
}

/// Masked coefficients zeroed by spectral dropout: `round(frac · n)`.
pub fn dropout_count(frac: f64, n: usize) -> usize {
    ((frac * n as f64).round() as usize).min(n)
}
