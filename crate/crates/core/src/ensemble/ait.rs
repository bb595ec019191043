use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{SparseMap, Tensor};
use crate::error::{Error, Result};
use crate::transforms::TransformDraw;

/// Input transformations available to per-model assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AitKind {
    Identity,
    /// Integer translation up to ±2 px per axis.
    Shift,
    /// Rotation about the centre, up to ±15°.
    Rotate,
    /// Zoom about the centre by a factor in [0.8, 1.2].
    Scale,
    /// Random resize into a 10% larger canvas, then back.
    ResizePad,
    /// Additive uniform noise of half-width ε/2.
    Noise,
    /// 10% of pixels zeroed.
    Dropout,
}

impl AitKind {
    pub const ALL: [AitKind; 7] = [
        AitKind::Identity,
        AitKind::Shift,
        AitKind::Rotate,
        AitKind::Scale,
        AitKind::ResizePad,
        AitKind::Noise,
        AitKind::Dropout,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AitKind::Identity => "identity",
            AitKind::Shift => "shift",
            AitKind::Rotate => "rotate",
            AitKind::Scale => "scale",
            AitKind::ResizePad => "resize_pad",
            AitKind::Noise => "noise",
            AitKind::Dropout => "dropout",
        }
    }
}

impl fmt::Display for AitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AitKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown ensemble transform {s:?}")))
    }
}

/// Independent uniform pick from `pool` for each of `k` models.
pub fn assign_async_transforms(pool: &[AitKind], k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<AitKind>> {
    if pool.is_empty() {
        return Err(Error::config("transform pool is empty"));
    }
    Ok((0..k).map(|_| pool[rng.random_range(0..pool.len())]).collect())
}

/// Samples the parameters of `kind` for a `[C, H, W]` input.
pub fn instantiate(kind: AitKind, shape: &[usize], eps: f64, rng: &mut ChaCha8Rng) -> Result<TransformDraw> {
    if shape.len() != 3 {
        return Err(Error::config(format!("ensemble transforms expect [C,H,W], got {shape:?}")));
    }
    let (h, w) = (shape[1], shape[2]);
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    Ok(match kind {
        AitKind::Identity => TransformDraw::Identity,
        AitKind::Shift => {
            let dy = rng.random_range(-2i32..=2) as f64;
            let dx = rng.random_range(-2i32..=2) as f64;
            let map = SparseMap::warp((h, w), (h, w), |i, j| (i as f64 - dy, j as f64 - dx));
            TransformDraw::Resample(Arc::new(map))
        }
        AitKind::Rotate => {
            let theta = rng.random_range(-15.0f64..=15.0).to_radians();
            let (s, c) = theta.sin_cos();
            let map = SparseMap::warp((h, w), (h, w), |i, j| {
                let (y, x) = (i as f64 - cy, j as f64 - cx);
                (cy + c * y + s * x, cx - s * y + c * x)
            });
            TransformDraw::Resample(Arc::new(map))
        }
        AitKind::Scale => {
            let f = rng.random_range(0.8f64..=1.2);
            let map = SparseMap::warp((h, w), (h, w), |i, j| (cy + (i as f64 - cy) / f, cx + (j as f64 - cx) / f));
            TransformDraw::Resample(Arc::new(map))
        }
        AitKind::ResizePad => {
            let ph = ((1.1 * h as f64).round() as usize).max(h);
            let pw = ((1.1 * w as f64).round() as usize).max(w);
            let rh = rng.random_range(h..=ph);
            let rw = rng.random_range(w..=pw);
            let top = rng.random_range(0..=ph - rh);
            let left = rng.random_range(0..=pw - rw);
            let map = SparseMap::resize((h, w), (rh, rw))
                .then(&SparseMap::pad((rh, rw), (ph, pw), top, left))?
                .then(&SparseMap::resize((ph, pw), (h, w)))?;
            TransformDraw::Resample(Arc::new(map))
        }
        AitKind::Noise => {
            let r = eps / 2.0;
            let mut add = Tensor::zeros(shape);
            for v in add.data_mut() {
                *v = rng.random_range(-r..=r);
            }
            TransformDraw::Affine { scale: 1.0, mul: None, add: Some(add) }
        }
        AitKind::Dropout => {
            let pixels = h * w;
            let k = (0.1 * pixels as f64).round() as usize;
            let mut mul = Tensor::full(shape, 1.0);
            for p in sample(rng, pixels, k) {
                for ch in 0..shape[0] {
                    mul.data_mut()[ch * pixels + p] = 0.0;
                }
            }
            TransformDraw::Affine { scale: 1.0, mul: Some(mul), add: None }
        }
    })
}
