use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TransformKind {
    #[default]
    None,
    /// Random resize and pad.
    Dim,
    /// Gaussian smoothing of the gradient (not an input transform).
    Tim,
    /// Scale-invariance copies `x / 2^i`.
    Sim,
    /// Mix in other-class images, then SIM scaling.
    Admix,
    /// Spectral noise and modulation over all DCT coefficients.
    Ssa,
    /// SSA restricted to the high-frequency mask.
    SsaH,
    /// One of spectral scale, noise or dropout on the high-frequency mask.
    SsaPlus,
}

impl TransformKind {
    pub const ALL: [TransformKind; 8] = [
        TransformKind::None,
        TransformKind::Dim,
        TransformKind::Tim,
        TransformKind::Sim,
        TransformKind::Admix,
        TransformKind::Ssa,
        TransformKind::SsaH,
        TransformKind::SsaPlus,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TransformKind::None => "none",
            TransformKind::Dim => "dim",
            TransformKind::Tim => "tim",
            TransformKind::Sim => "sim",
            TransformKind::Admix => "admix",
            TransformKind::Ssa => "ssa",
            TransformKind::SsaH => "ssa_h",
            TransformKind::SsaPlus => "ssa_plus",
        }
    }

    /// Whether repeated copies differ (and are worth averaging).
    pub fn is_stochastic(self) -> bool {
        !matches!(self, TransformKind::None | TransformKind::Tim)
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TransformKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown transform {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformSpec {
    pub kind: TransformKind,
    /// Number of transformed copies averaged per gradient.
    pub copies: usize,
    /// High-frequency ratio of the spectral mask.
    pub rho: f64,
    /// DIM canvas size as a multiple of the image side.
    pub dim_pad: f64,
    pub dim_prob: f64,
    pub tim_kernel: usize,
    pub tim_sigma: f64,
    pub sim_scales: usize,
    pub admix_eta: f64,
    /// Other-class images mixed per gradient evaluation.
    pub admix_count: usize,
    /// Spectral noise scale in units of ε.
    pub ssa_sigma: f64,
    /// SSA modulation amplitude: `M ~ U[1 − a, 1 + a]`.
    pub ssa_amp: f64,
    pub dropout_frac: f64,
}

impl Default for TransformSpec {
    fn default() -> Self {
        TransformSpec {
            kind: TransformKind::None,
            copies: 20,
            rho: 0.2,
            dim_pad: 1.1,
            dim_prob: 0.5,
            tim_kernel: 5,
            tim_sigma: 1.5,
            sim_scales: 5,
            admix_eta: 0.2,
            admix_count: 3,
            ssa_sigma: 1.0,
            ssa_amp: 0.5,
            dropout_frac: 0.10,
        }
    }
}

impl TransformSpec {
    pub fn new(kind: TransformKind) -> Self {
        TransformSpec { kind, ..Default::default() }
    }

    pub fn with_copies(mut self, copies: usize) -> Self {
        self.copies = copies;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.copies == 0 {
            return bad("copies must be at least 1".into());
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return bad(format!("rho {} outside (0, 1]", self.rho));
        }
        if !(self.dim_pad >= 1.0 && self.dim_pad.is_finite()) {
            return bad(format!("dim_pad {} must be at least 1", self.dim_pad));
        }
        if !(0.0..=1.0).contains(&self.dim_prob) {
            return bad(format!("dim_prob {} outside [0, 1]", self.dim_prob));
        }
        if self.tim_kernel % 2 == 0 {
            return bad(format!("tim kernel {} must be odd", self.tim_kernel));
        }
        if !(self.tim_sigma > 0.0) {
            return bad("tim sigma must be positive".into());
        }
        if self.sim_scales == 0 || self.admix_count == 0 {
            return bad("sim_scales and admix_count must be positive".into());
        }
        if !(self.ssa_sigma >= 0.0 && self.ssa_amp >= 0.0 && self.ssa_amp <= 1.0) {
            return bad("ssa_sigma must be nonnegative and ssa_amp within [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.dropout_frac) {
            return bad(format!("dropout_frac {} outside [0, 1]", self.dropout_frac));
        }
        Ok(())
    }
}
