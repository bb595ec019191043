//! Experiment configuration files.
//!
//! A config file is a flat UTF-8 list of `key = value` lines grouped under
//! `[attack]`, `[transform]`, `[ensemble]`, `[data]` and `[output]`. Key
//! names are unique across sections, so each one doubles as a `--key`
//! command-line flag that overrides the file.

use std::path::{Path, PathBuf};

use ini::Ini;

use crate::attacks::{
    AttackConfig, Direction, DualSpec, Method, RandomInit, RgiSpec, ScheduleKind, ScheduleSpec,
};
use crate::diffcore::LossKind;
use crate::ensemble::{AitKind, ConflictRule, EnsembleSpec, FusionMode};
use crate::error::{Error, Result};
use crate::harness::sweep::SweepAxis;
use crate::transforms::TransformSpec;

/// Every recognised key as `(section, key, help)`.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("attack", "preset", "named hyper-parameter preset applied before other keys (adjustment)"),
    ("attack", "method", "fgsm|ifgsm|mifgsm|nifgsm|pifgsm|emifgsm|vmifgsm|gimifgsm"),
    ("attack", "eps", "L-inf budget on [0,1] pixels; fractions like 16/255 accepted"),
    ("attack", "iters", "iterations T"),
    ("attack", "step_scale", "step multiplier s (step = eps*s*w_t)"),
    ("attack", "decay", "momentum decay"),
    ("attack", "schedule", "identity|log|linear|exp|pvalue"),
    ("attack", "schedule_p", "pvalue exponent"),
    ("attack", "schedule_direction", "decreasing|increasing"),
    ("attack", "normalize", "mean-abs gradient normalisation before accumulation (bool)"),
    ("attack", "loss", "ce|margin"),
    ("attack", "rgi", "random global momentum initialisation (bool)"),
    ("attack", "rgi_restarts", "RGI restarts N"),
    ("attack", "rgi_pre_iters", "RGI warm-up iterations"),
    ("attack", "dual", "dual examples (bool)"),
    ("attack", "dual_count", "number of dual examples"),
    ("attack", "dual_schedule", "step sequence of the dual examples"),
    ("attack", "dual_project", "project dual examples each step (bool)"),
    ("attack", "ni_lookahead", "NI look-ahead distance"),
    ("attack", "pi_amplification", "PI amplification factor"),
    ("attack", "pi_kernel", "PI project kernel side (odd)"),
    ("attack", "emi_samples", "EMI samples per iteration"),
    ("attack", "emi_radius", "EMI sample coefficient range"),
    ("attack", "vmi_samples", "VMI neighbourhood samples"),
    ("attack", "vmi_beta", "VMI neighbourhood half-width in units of eps"),
    ("attack", "gimi_pre_iters", "GIMI warm-up iterations"),
    ("transform", "kind", "none|dim|tim|sim|admix|ssa|ssa_h|ssa_plus"),
    ("transform", "copies", "transformed copies per gradient"),
    ("transform", "rho", "high-frequency ratio"),
    ("transform", "dim_pad", "DIM canvas factor"),
    ("transform", "dim_prob", "DIM transform probability"),
    ("transform", "tim_kernel", "TIM kernel side (odd)"),
    ("transform", "tim_sigma", "TIM Gaussian sigma in pixels"),
    ("transform", "sim_scales", "SIM scale copies"),
    ("transform", "admix_eta", "Admix mixing strength"),
    ("transform", "admix_count", "Admix images per gradient"),
    ("transform", "ssa_sigma", "spectral noise scale in units of eps"),
    ("transform", "ssa_amp", "spectral modulation amplitude"),
    ("transform", "dropout_frac", "spectral dropout fraction of masked coefficients"),
    ("ensemble", "fusion", "none|loss|logit|prediction|longitude"),
    ("ensemble", "weights", "comma-separated model weights (default uniform)"),
    ("ensemble", "tau", "gradient alignment threshold"),
    ("ensemble", "conflict", "cosine|sign"),
    ("ensemble", "ga", "gradient alignment (bool)"),
    ("ensemble", "ait", "asynchronous input transforms (bool)"),
    ("ensemble", "aligned_transforms", "one shared input transform per step (bool)"),
    ("ensemble", "ms", "model shuffle (bool)"),
    ("ensemble", "ait_pool", "comma-separated transforms"),
    ("data", "dataset", "TADS1 dataset path"),
    ("data", "surrogates", "comma-separated surrogate weight paths"),
    ("data", "victims", "comma-separated victim weight paths"),
    ("data", "n_eval", "holdout images attacked"),
    ("data", "seed", "experiment seed"),
    ("output", "csv", "CSV output path"),
    ("output", "run_id", "run identifier written to every row"),
    ("output", "timing", "record wall time in milliseconds (bool)"),
    ("output", "sweep_axis", "iters|step_scale|decay|copies|rho"),
    ("output", "sweep_values", "comma-separated axis values"),
    ("output", "sweep_methods", "comma-separated methods (default: method)"),
];

pub const SECTIONS: [&str; 5] = ["attack", "transform", "ensemble", "data", "output"];

/// Section owning `key`.
pub fn section_of(key: &str) -> Option<&'static str> {
    KEYS.iter().find(|(_, k, _)| *k == key).map(|(s, _, _)| *s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub attack: AttackConfig,
    pub transform: TransformSpec,
    pub ensemble: Option<EnsembleSpec>,
    pub dataset: Option<PathBuf>,
    pub surrogates: Vec<PathBuf>,
    pub victims: Vec<PathBuf>,
    pub n_eval: usize,
    pub seed: u64,
    pub csv: Option<PathBuf>,
    pub run_id: String,
    pub timing: bool,
    pub sweep_axis: Option<SweepAxis>,
    pub sweep_values: Vec<f64>,
    pub sweep_methods: Vec<Method>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            attack: AttackConfig::default(),
            transform: TransformSpec::default(),
            ensemble: None,
            dataset: None,
            surrogates: Vec::new(),
            victims: Vec::new(),
            n_eval: 500,
            seed: 0,
            csv: None,
            run_id: "run".to_string(),
            timing: false,
            sweep_axis: None,
            sweep_values: Vec::new(),
            sweep_methods: Vec::new(),
        }
    }
}

/// Parses a real, accepting `a/b` fractions.
pub fn parse_real(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::config(format!("not a number: {s:?}"));
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            a / b
        }
        None => s.parse().map_err(|_| bad())?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

pub fn parse_bool(s: &str) -> Result<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(Error::config(format!("not a boolean: {other:?}"))),
    }
}

fn parse_count(s: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| Error::config(format!("not a nonnegative integer: {s:?}")))
}

fn parse_list<T>(s: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(f).collect()
}

fn parse_loss(s: &str) -> Result<LossKind> {
    match s.trim() {
        "ce" | "cross_entropy" => Ok(LossKind::CrossEntropy),
        "margin" => Ok(LossKind::Margin),
        other => Err(Error::config(format!("unknown loss {other:?}"))),
    }
}

fn parse_direction(s: &str) -> Result<Direction> {
    match s.trim() {
        "decreasing" => Ok(Direction::Decreasing),
        "increasing" => Ok(Direction::Increasing),
        other => Err(Error::config(format!("unknown schedule direction {other:?}"))),
    }
}

/// Per-method hyper-parameters tuned against a remote classifier; methods
/// without an entry keep the defaults.
pub fn adjustment_preset(method: Method) -> AttackConfig {
    let mut c = AttackConfig::new(method);
    match method {
        Method::Ifgsm => c.iters = 2,
        Method::Mifgsm => {
            c.iters = 5;
            c.decay = 1.2;
        }
        Method::Pifgsm => {
            c.iters = 18;
            c.step_scale = 0.8;
            c.decay = 0.95;
        }
        Method::Vmifgsm => {
            c.iters = 32;
            c.decay = 1.0;
            c.params.vmi_samples = 15;
        }
        Method::Gimifgsm => {
            c.iters = 4;
            c.params.gimi_pre_iters = 9;
            c.decay = 1.3;
        }
        _ => {}
    }
    c
}

impl ExperimentConfig {
    /// Builds a config from `(key, value)` assignments applied in order on
    /// top of the defaults. `method` and `preset` are resolved first so the
    /// preset never clobbers an explicit key.
    pub fn from_assignments(pairs: &[(String, String)]) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (k, _) in pairs {
            if section_of(k).is_none() {
                return Err(Error::config(format!("unknown config key {k:?}")));
            }
        }
        let last = |key: &str| pairs.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let method = match last("method") {
            Some(m) => m.trim().parse()?,
            None => Method::Mifgsm,
        };
        cfg.attack = match last("preset").map(str::trim) {
            None | Some("") | Some("none") => AttackConfig::new(method),
            Some("adjustment") => adjustment_preset(method),
            Some(other) => return Err(Error::config(format!("unknown preset {other:?}"))),
        };
        for (k, v) in pairs {
            if k != "method" && k != "preset" {
                cfg.set(k, v)?;
            }
        }
        cfg.attack.validate()?;
        cfg.transform.validate()?;
        Ok(cfg)
    }

    /// Parses config-file text into ordered assignments, checking that each
    /// key sits in its own section.
    pub fn parse_file_text(text: &str) -> Result<Vec<(String, String)>> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::config(format!("config syntax: {e}")))?;
        let mut pairs = Vec::new();
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(Error::config(format!("key {k:?} appears before any [section]")));
                }
                continue;
            };
            if !SECTIONS.contains(&section) {
                return Err(Error::config(format!("unknown section [{section}]")));
            }
            for (k, v) in props.iter() {
                match section_of(k) {
                    Some(s) if s == section => pairs.push((k.to_string(), v.to_string())),
                    Some(s) => return Err(Error::config(format!("key {k:?} belongs in [{s}], not [{section}]"))),
                    None => return Err(Error::config(format!("unknown key {k:?} in [{section}]"))),
                }
            }
        }
        Ok(pairs)
    }

    pub fn from_file_text(text: &str) -> Result<Self> {
        Self::from_assignments(&Self::parse_file_text(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_file_text(&std::fs::read_to_string(path)?)
    }

    fn ensemble_mut(&mut self) -> &mut EnsembleSpec {
        self.ensemble.get_or_insert_with(EnsembleSpec::default)
    }

    fn rgi_mut(&mut self) -> &mut RgiSpec {
        self.attack.rgi.get_or_insert_with(RgiSpec::default)
    }

    fn dual_mut(&mut self) -> &mut DualSpec {
        self.attack.dual.get_or_insert_with(DualSpec::default)
    }

    /// Applies one assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let a = &mut self.attack;
        let t = &mut self.transform;
        match key {
            "method" => a.method = v.parse()?,
            "preset" => return Err(Error::config("preset can only be resolved by from_assignments")),
            "eps" => a.eps = parse_real(v)?,
            "iters" => a.iters = parse_count(v)?,
            "step_scale" => a.step_scale = parse_real(v)?,
            "decay" => a.decay = parse_real(v)?,
            "schedule" => a.schedule.kind = v.parse()?,
            "schedule_p" => a.schedule.p = parse_real(v)?,
            "schedule_direction" => a.schedule.direction = parse_direction(v)?,
            "normalize" => a.normalize = parse_bool(v)?,
            "loss" => a.loss = parse_loss(v)?,
            "rgi" => {
                if parse_bool(v)? {
                    self.rgi_mut();
                } else {
                    self.attack.rgi = None;
                }
            }
            "rgi_restarts" => self.rgi_mut().restarts = parse_count(v)?,
            "rgi_pre_iters" => self.rgi_mut().pre_iters = parse_count(v)?,
            "dual" => {
                if parse_bool(v)? {
                    self.dual_mut();
                } else {
                    self.attack.dual = None;
                }
            }
            "dual_count" => self.dual_mut().count = parse_count(v)?,
            "dual_schedule" => {
                let kind: ScheduleKind = v.parse()?;
                self.dual_mut().schedule = ScheduleSpec::new(kind).increasing();
            }
            "dual_project" => self.dual_mut().project = parse_bool(v)?,
            "ni_lookahead" => a.params.ni_lookahead = parse_real(v)?,
            "pi_amplification" => a.params.pi_amplification = parse_real(v)?,
            "pi_kernel" => a.params.pi_kernel = parse_count(v)?,
            "emi_samples" => a.params.emi_samples = parse_count(v)?,
            "emi_radius" => a.params.emi_radius = parse_real(v)?,
            "vmi_samples" => a.params.vmi_samples = parse_count(v)?,
            "vmi_beta" => a.params.vmi_beta = parse_real(v)?,
            "gimi_pre_iters" => a.params.gimi_pre_iters = parse_count(v)?,
            "kind" => t.kind = v.parse()?,
            "copies" => t.copies = parse_count(v)?,
            "rho" => t.rho = parse_real(v)?,
            "dim_pad" => t.dim_pad = parse_real(v)?,
            "dim_prob" => t.dim_prob = parse_real(v)?,
            "tim_kernel" => t.tim_kernel = parse_count(v)?,
            "tim_sigma" => t.tim_sigma = parse_real(v)?,
            "sim_scales" => t.sim_scales = parse_count(v)?,
            "admix_eta" => t.admix_eta = parse_real(v)?,
            "admix_count" => t.admix_count = parse_count(v)?,
            "ssa_sigma" => t.ssa_sigma = parse_real(v)?,
            "ssa_amp" => t.ssa_amp = parse_real(v)?,
            "dropout_frac" => t.dropout_frac = parse_real(v)?,
            "fusion" => {
                if v == "none" {
                    self.ensemble = None;
                } else {
                    let mode: FusionMode = v.parse()?;
                    self.ensemble_mut().fusion = mode;
                }
            }
            "weights" => self.ensemble_mut().weights = Some(parse_list(v, parse_real)?),
            "tau" => self.ensemble_mut().tau = parse_real(v)?,
            "conflict" => {
                self.ensemble_mut().conflict = match v {
                    "cosine" => ConflictRule::Cosine,
                    "sign" => ConflictRule::Sign,
                    other => return Err(Error::config(format!("unknown conflict rule {other:?}"))),
                }
            }
            "ga" => self.ensemble_mut().ga_enabled = parse_bool(v)?,
            "ait" => self.ensemble_mut().ait_enabled = parse_bool(v)?,
            "aligned_transforms" => self.ensemble_mut().aligned_transforms = parse_bool(v)?,
            "ms" => self.ensemble_mut().ms_enabled = parse_bool(v)?,
            "ait_pool" => self.ensemble_mut().ait_pool = parse_list(v, |s| s.parse::<AitKind>())?,
            "dataset" => self.dataset = Some(PathBuf::from(v)),
            "surrogates" => self.surrogates = parse_list(v, |s| Ok(PathBuf::from(s)))?,
            "victims" => self.victims = parse_list(v, |s| Ok(PathBuf::from(s)))?,
            "n_eval" => self.n_eval = parse_count(v)?,
            "seed" => self.seed = v.parse().map_err(|_| Error::config(format!("bad seed {v:?}")))?,
            "csv" => self.csv = Some(PathBuf::from(v)),
            "run_id" => {
                if v.contains(',') || v.contains('\n') {
                    return Err(Error::config("run_id may not contain commas or newlines"));
                }
                self.run_id = v.to_string()
            }
            "timing" => self.timing = parse_bool(v)?,
            "sweep_axis" => self.sweep_axis = Some(v.parse()?),
            "sweep_values" => self.sweep_values = parse_list(v, parse_real)?,
            "sweep_methods" => self.sweep_methods = parse_list(v, |s| s.parse::<Method>())?,
            other => return Err(Error::config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Zero random starts for RGI and duals (for degenerate comparisons).
    pub fn zero_inits(&mut self) {
        if let Some(r) = &mut self.attack.rgi {
            r.init = RandomInit::Zero;
        }
        if let Some(d) = &mut self.attack.dual {
            d.init = RandomInit::Zero;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::TransformKind;

    const SAMPLE: &str = "
[attack]
method = vmifgsm
eps = 16/255
iters = 12
rgi = true
[transform]
kind = ssa_plus
rho = 0.3
[ensemble]
fusion = logit
ga = yes
ait_pool = shift, rotate
[data]
dataset = data.tads
victims = a.talw, b.talw
seed = 9
[output]
sweep_axis = decay
sweep_values = 0, 0.5, 1
";

    #[test]
    fn parses_all_sections() {
        let c = ExperimentConfig::from_file_text(SAMPLE).unwrap();
        assert_eq!(c.attack.method, Method::Vmifgsm);
        assert!((c.attack.eps - 16.0 / 255.0).abs() < 1e-15);
        assert_eq!(c.attack.iters, 12);
        assert_eq!(c.attack.rgi, Some(RgiSpec::default()));
        assert_eq!(c.transform.kind, TransformKind::SsaPlus);
        assert_eq!(c.transform.rho, 0.3);
        let e = c.ensemble.unwrap();
        assert!(e.ga_enabled);
        assert_eq!(e.ait_pool, vec![AitKind::Shift, AitKind::Rotate]);
        assert_eq!(c.victims.len(), 2);
        assert_eq!(c.seed, 9);
        assert_eq!(c.sweep_axis, Some(SweepAxis::Decay));
        assert_eq!(c.sweep_values, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn flags_override_file() {
        let mut pairs = ExperimentConfig::parse_file_text(SAMPLE).unwrap();
        pairs.push(("iters".into(), "3".into()));
        let c = ExperimentConfig::from_assignments(&pairs).unwrap();
        assert_eq!(c.attack.iters, 3);
    }

    #[test]
    fn preset_then_explicit() {
        let pairs = vec![
            ("decay".to_string(), "0.5".to_string()),
            ("method".to_string(), "pifgsm".to_string()),
            ("preset".to_string(), "adjustment".to_string()),
        ];
        let c = ExperimentConfig::from_assignments(&pairs).unwrap();
        assert_eq!(c.attack.iters, 18);
        assert_eq!(c.attack.step_scale, 0.8);
        assert_eq!(c.attack.decay, 0.5);
    }

    #[test]
    fn rejects_misplaced_and_unknown() {
        assert!(ExperimentConfig::from_file_text("[attack]\nrho = 0.2\n").is_err());
        assert!(ExperimentConfig::from_file_text("[attack]\nbogus = 1\n").is_err());
        assert!(ExperimentConfig::from_file_text("[nope]\n").is_err());
        assert!(ExperimentConfig::from_file_text("iters = 3\n").is_err());
        assert!(ExperimentConfig::from_file_text("[attack]\niters = 0\n").is_err());
        assert!(ExperimentConfig::from_file_text("[attack]\neps = x\n").is_err());
    }

    #[test]
    fn keys_are_unique() {
        for (i, (_, k, _)) in KEYS.iter().enumerate() {
            assert!(KEYS[i + 1..].iter().all(|(_, k2, _)| k2 != k), "{k}");
        }
    }
}
