use std::fmt;
use std::str::FromStr;

use crate::attacks::Method;
use crate::error::{Error, Result};
use crate::harness::dataset::Dataset;
use crate::harness::experiment::{run_experiment, AttackReport, Experiment};

/// Hyper-parameter swept by [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepAxis {
    Iters,
    StepScale,
    Decay,
    Copies,
    Rho,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 5] =
        [SweepAxis::Iters, SweepAxis::StepScale, SweepAxis::Decay, SweepAxis::Copies, SweepAxis::Rho];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Iters => "iters",
            SweepAxis::StepScale => "step_scale",
            SweepAxis::Decay => "decay",
            SweepAxis::Copies => "copies",
            SweepAxis::Rho => "rho",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown sweep axis {s:?}")))
    }
}

fn as_count(axis: SweepAxis, v: f64) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v < 1e9 {
        Ok(v as usize)
    } else {
        Err(Error::config(format!("{axis} needs positive integer values, got {v}")))
    }
}

/// Sets `axis` to `value` on an experiment.
pub fn apply_axis(exp: &mut Experiment<'_>, axis: SweepAxis, value: f64) -> Result<()> {
    match axis {
        SweepAxis::Iters => exp.attack.iters = as_count(axis, value)?,
        SweepAxis::StepScale => exp.attack.step_scale = value,
        SweepAxis::Decay => exp.attack.decay = value,
        SweepAxis::Copies => exp.transform.copies = as_count(axis, value)?,
        SweepAxis::Rho => exp.transform.rho = value,
    }
    Ok(())
}

/// One experiment per (method, value), all sharing the base seed. Reports
/// come back method-major in the given orders.
pub fn sweep(
    base: &Experiment<'_>,
    ds: &Dataset,
    axis: SweepAxis,
    values: &[f64],
    methods: &[Method],
) -> Result<Vec<AttackReport>> {
    if values.is_empty() {
        return Err(Error::config("a sweep needs at least one value"));
    }
    let methods = if methods.is_empty() { vec![base.attack.method] } else { methods.to_vec() };
    let mut out = Vec::with_capacity(methods.len() * values.len());
    for &m in &methods {
        for &v in values {
            let mut exp = base.clone();
            exp.attack.method = m;
            apply_axis(&mut exp, axis, v)?;
            exp.run_id = format!("{}/{}/{}={}", base.run_id, m, axis, v);
            let mut r = run_experiment(&exp, ds)?;
            r.axis = Some((axis.to_string(), v));
            out.push(r);
        }
    }
    Ok(out)
}
