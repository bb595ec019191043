use std::fmt;
use std::str::FromStr;

use crate::attacks::schedule::{ScheduleKind, ScheduleSpec};
use crate::diffcore::LossKind;
use crate::error::{Error, Result};

/// The iterative gradient attacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Fgsm,
    Ifgsm,
    Mifgsm,
    Nifgsm,
    Pifgsm,
    Emifgsm,
    Vmifgsm,
    Gimifgsm,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Fgsm,
        Method::Ifgsm,
        Method::Mifgsm,
        Method::Nifgsm,
        Method::Pifgsm,
        Method::Emifgsm,
        Method::Vmifgsm,
        Method::Gimifgsm,
    ];

    /// The seven iterative attacks (FGSM excluded).
    pub const ITERATIVE: [Method; 7] = [
        Method::Ifgsm,
        Method::Mifgsm,
        Method::Nifgsm,
        Method::Pifgsm,
        Method::Emifgsm,
        Method::Vmifgsm,
        Method::Gimifgsm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Fgsm => "fgsm",
            Method::Ifgsm => "ifgsm",
            Method::Mifgsm => "mifgsm",
            Method::Nifgsm => "nifgsm",
            Method::Pifgsm => "pifgsm",
            Method::Emifgsm => "emifgsm",
            Method::Vmifgsm => "vmifgsm",
            Method::Gimifgsm => "gimifgsm",
        }
    }

    /// Whether the update accumulates momentum (`m_t = γ m_{t−1} + ĝ_t`).
    pub fn uses_momentum(self) -> bool {
        !matches!(self, Method::Fgsm | Method::Ifgsm)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown method {s:?}")))
    }
}

/// Per-method constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodParams {
    /// NI look-ahead distance λ (pixel units).
    pub ni_lookahead: f64,
    /// PI amplification factor β.
    pub pi_amplification: f64,
    /// PI project kernel side (odd).
    pub pi_kernel: usize,
    pub emi_samples: usize,
    /// EMI sample coefficients span `[−radius, radius]`.
    pub emi_radius: f64,
    pub vmi_samples: usize,
    /// VMI neighbourhood half-width as a multiple of ε.
    pub vmi_beta: f64,
    /// GIMI warm-up iterations T'.
    pub gimi_pre_iters: usize,
}

impl Default for MethodParams {
    fn default() -> Self {
        MethodParams {
            ni_lookahead: 1.6 / 255.0,
            pi_amplification: 2.5,
            pi_kernel: 3,
            emi_samples: 11,
            emi_radius: 7.0,
            vmi_samples: 20,
            vmi_beta: 1.5,
            gimi_pre_iters: 5,
        }
    }
}

/// How random starting perturbations are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RandomInit {
    /// Uniform per coordinate in `[−ε, ε]`, then pixel-clamped.
    #[default]
    Uniform,
    /// Start at zero (used to collapse the tricks to their base cases).
    Zero,
}

/// Random global momentum initialisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RgiSpec {
    /// Number of random restarts N.
    pub restarts: usize,
    /// Warm-up iterations per restart T'.
    pub pre_iters: usize,
    pub init: RandomInit,
}

impl Default for RgiSpec {
    fn default() -> Self {
        RgiSpec { restarts: 5, pre_iters: 5, init: RandomInit::Uniform }
    }
}

/// Dual examples with ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualSpec {
    /// Number of dual examples N (N = 1 is the vanilla dual example).
    pub count: usize,
    /// Step sequence shared by duals and the main iterate (increasing).
    pub schedule: ScheduleSpec,
    /// Project duals into the threat model after each step.
    pub project: bool,
    pub init: RandomInit,
}

impl Default for DualSpec {
    fn default() -> Self {
        DualSpec {
            count: 3,
            schedule: ScheduleSpec::new(ScheduleKind::Identity).increasing(),
            project: true,
            init: RandomInit::Uniform,
        }
    }
}

/// Everything that parameterises one attack run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub method: Method,
    /// L∞ budget in pixel units of `[0, 1]` images.
    pub eps: f64,
    /// Number of iterations T.
    pub iters: usize,
    /// Multiplier on the per-step budget `ε · w_t`.
    pub step_scale: f64,
    /// Momentum decay γ.
    pub decay: f64,
    /// Step sequence of the main iterate.
    pub schedule: ScheduleSpec,
    pub params: MethodParams,
    /// Divide each gradient by its mean absolute value before accumulating.
    pub normalize: bool,
    pub loss: LossKind,
    pub rgi: Option<RgiSpec>,
    pub dual: Option<DualSpec>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            method: Method::Mifgsm,
            eps: 16.0 / 255.0,
            iters: 10,
            step_scale: 1.0,
            decay: 1.0,
            schedule: ScheduleSpec::default(),
            params: MethodParams::default(),
            normalize: true,
            loss: LossKind::CrossEntropy,
            rgi: None,
            dual: None,
        }
    }
}

impl AttackConfig {
    pub fn new(method: Method) -> Self {
        AttackConfig { method, ..Default::default() }
    }

    /// Iteration count actually run (FGSM is a single step).
    pub fn effective_iters(&self) -> usize {
        if self.method == Method::Fgsm {
            1
        } else {
            self.iters
        }
    }

    /// Constant step `ε · s · (1/T)` used by warm-up phases; the same value
    /// as an identity-schedule main step.
    pub fn base_step(&self) -> f64 {
        self.eps * self.step_scale * (1.0 / self.effective_iters() as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m.to_string()));
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad("eps must be positive");
        }
        if self.iters == 0 {
            return bad("iters must be at least 1");
        }
        if !(self.step_scale > 0.0 && self.step_scale.is_finite()) {
            return bad("step_scale must be positive");
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            return bad("decay must be nonnegative");
        }
        let p = &self.params;
        if p.pi_kernel % 2 == 0 || p.emi_samples == 0 || p.vmi_samples == 0 || p.gimi_pre_iters == 0 {
            return bad("method params: odd PI kernel and positive sample counts required");
        }
        if let Some(r) = &self.rgi {
            if r.restarts == 0 || r.pre_iters == 0 {
                return bad("RGI needs N ≥ 1 restarts and T' ≥ 1 warm-up iterations");
            }
        }
        if let Some(d) = &self.dual {
            if d.count == 0 {
                return bad("dual example count must be at least 1");
            }
        }
        Ok(())
    }

    /// Compact `+`-joined description of the enabled tricks.
    pub fn trick_label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(r) = &self.rgi {
            parts.push(format!("rgi{}", r.restarts));
        }
        if self.schedule.kind != ScheduleKind::Identity {
            parts.push(format!("sched_{}", self.schedule.kind));
        }
        if let Some(d) = &self.dual {
            parts.push(format!("dual{}_{}", d.count, d.schedule.kind));
        }
        if parts.is_empty() {
            "none".to_string()
        } else {
            parts.join("+")
        }
    }
}
