use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Shape of a step-size sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ScheduleKind {
    /// Uniform steps (the unscheduled baseline).
    #[default]
    Identity,
    Log,
    Linear,
    Exp,
    PValue,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 5] =
        [ScheduleKind::Identity, ScheduleKind::Log, ScheduleKind::Linear, ScheduleKind::Exp, ScheduleKind::PValue];

    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleKind::Identity => "identity",
            ScheduleKind::Log => "log",
            ScheduleKind::Linear => "linear",
            ScheduleKind::Exp => "exp",
            ScheduleKind::PValue => "pvalue",
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScheduleKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown schedule {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Direction {
    #[default]
    Decreasing,
    Increasing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    /// Exponent of the pvalue sequence.
    pub p: f64,
    pub direction: Direction,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec { kind: ScheduleKind::Identity, p: 0.6, direction: Direction::Decreasing }
    }
}

impl ScheduleSpec {
    pub fn new(kind: ScheduleKind) -> Self {
        ScheduleSpec { kind, ..Default::default() }
    }

    pub fn increasing(mut self) -> Self {
        self.direction = Direction::Increasing;
        self
    }
}

/// Normalised step weights `w_1..w_T` (nonnegative, summing to 1).
///
/// With `d_i = T − i + 1` the unnormalised decreasing forms are
/// identity `1`, log `ln(d_i + 1)`, linear `d_i`, exp `e^{d_i}` and
/// pvalue `1 / i^p`. The increasing direction is the reversed list.
pub fn make_schedule(spec: &ScheduleSpec, iters: usize) -> Result<Vec<f64>> {
    if iters == 0 {
        return Err(Error::config("schedule needs at least one iteration"));
    }
    if spec.kind == ScheduleKind::PValue && !(spec.p >= 0.0 && spec.p.is_finite()) {
        return Err(Error::config("pvalue exponent must be finite and nonnegative"));
    }
    let t = iters as f64;
    let raw: Vec<f64> = (1..=iters)
        .map(|i| {
            let d = t - i as f64 + 1.0;
            match spec.kind {
                ScheduleKind::Identity => 1.0,
                ScheduleKind::Log => (d + 1.0).ln(),
                ScheduleKind::Linear => d,
                // shifted by −T so long schedules do not overflow
                ScheduleKind::Exp => (d - t).exp(),
                ScheduleKind::PValue => 1.0 / (i as f64).powf(spec.p),
            }
        })
        .collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.into_iter().map(|v| v / total).collect();
    if spec.direction == Direction::Increasing {
        w.reverse();
    }
    Ok(w)
}
