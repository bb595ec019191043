use std::io::Write;
use std::time::Instant;

use crate::attacks::{derive_seed, run_attack, AttackConfig, GradientOracle, Method, ModelOracle};
use crate::diffcore::{Classifier, Tensor};
use crate::ensemble::{longitude_attack, EnsembleSpec, FusionMode, LateralOracle};
use crate::error::{Error, Result};
use crate::harness::dataset::Dataset;
use crate::harness::metrics::{clean_accuracy, evaluate_outcomes, rate_of, Outcome};
use crate::harness::zoo::NamedModel;
use crate::modelzoo::Model;
use crate::par::{try_map_indexed, Execution};
use crate::transforms::{AdmixPool, TransformKind, TransformSpec, Transformer, TransformedOracle};

/// Holdout stride shared with the training recipe.
pub const HOLDOUT_EVERY: usize = 5;
/// Training images offered to Admix as other-class mixes.
pub const ADMIX_POOL_SIZE: usize = 256;

/// One attack-and-evaluate run.
#[derive(Debug, Clone)]
pub struct Experiment<'a> {
    pub run_id: String,
    /// One surrogate, or the members of an ensemble.
    pub surrogates: Vec<&'a NamedModel>,
    pub victims: Vec<&'a NamedModel>,
    pub attack: AttackConfig,
    pub transform: TransformSpec,
    pub ensemble: Option<EnsembleSpec>,
    /// Held-out images attacked (the first `n_eval` of the holdout split).
    pub n_eval: usize,
    pub seed: u64,
    pub exec: Execution,
    /// Record wall time; off keeps CSV output byte-stable.
    pub timing: bool,
}

impl<'a> Experiment<'a> {
    pub fn new(surrogate: &'a NamedModel, victims: Vec<&'a NamedModel>, attack: AttackConfig) -> Self {
        Experiment {
            run_id: "run".to_string(),
            surrogates: vec![surrogate],
            victims,
            attack,
            transform: TransformSpec::default(),
            ensemble: None,
            n_eval: 500,
            seed: 0,
            exec: Execution::Parallel,
            timing: false,
        }
    }

    /// `+`-joined tricks beyond the base method.
    pub fn trick_label(&self) -> String {
        let mut parts = Vec::new();
        let a = self.attack.trick_label();
        if a != "none" {
            parts.push(a);
        }
        if self.transform.kind != TransformKind::None {
            parts.push(format!("{}x{}", self.transform.kind, self.transform.copies));
        }
        if let Some(e) = &self.ensemble {
            parts.push(e.trick_label());
        }
        if parts.is_empty() {
            "none".to_string()
        } else {
            parts.join("+")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VictimResult {
    pub name: String,
    pub clean_acc: f64,
    pub transfer_asr: f64,
    pub outcomes: Vec<Outcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    pub run_id: String,
    pub method: Method,
    pub tricks: String,
    /// Sweep axis name and value, if this run is part of a sweep.
    pub axis: Option<(String, f64)>,
    pub surrogate: String,
    pub seed: u64,
    pub n_eval: usize,
    /// Mean success over the surrogates themselves.
    pub whitebox_asr: f64,
    pub victims: Vec<VictimResult>,
    pub mean_clean_acc: f64,
    pub mean_transfer_asr: f64,
    pub wall_ms: u64,
    pub config_echo: String,
}

/// CSV header of [`AttackReport::csv_records`].
pub const CSV_HEADER: [&str; 13] = [
    "run_id",
    "method",
    "tricks",
    "axis",
    "axis_value",
    "surrogate",
    "victim",
    "clean_acc",
    "whitebox_asr",
    "transfer_asr",
    "n_eval",
    "seed",
    "wall_ms",
];

impl AttackReport {
    /// One record per victim, then a `mean` record.
    pub fn csv_records(&self) -> Vec<Vec<String>> {
        let (axis, value) = match &self.axis {
            Some((a, v)) => (a.clone(), v.to_string()),
            None => ("none".to_string(), String::new()),
        };
        let row = |victim: &str, clean: f64, asr: f64| {
            vec![
                self.run_id.clone(),
                self.method.to_string(),
                self.tricks.clone(),
                axis.clone(),
                value.clone(),
                self.surrogate.clone(),
                victim.to_string(),
                clean.to_string(),
                self.whitebox_asr.to_string(),
                asr.to_string(),
                self.n_eval.to_string(),
                self.seed.to_string(),
                self.wall_ms.to_string(),
            ]
        };
        let mut out: Vec<Vec<String>> =
            self.victims.iter().map(|v| row(&v.name, v.clean_acc, v.transfer_asr)).collect();
        out.push(row("mean", self.mean_clean_acc, self.mean_transfer_asr));
        out
    }
}

/// Writes the header and every report's records.
pub fn write_csv<W: Write>(reports: &[AttackReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in reports {
        for rec in r.csv_records() {
            w.write_record(&rec).map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(reports: &[AttackReport]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(reports, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::config(e.to_string()))
}

/// First `n` holdout images with their labels and dataset indices.
pub fn eval_split(ds: &Dataset, n: usize) -> Result<(Vec<usize>, Vec<Tensor>, Vec<usize>)> {
    let idx: Vec<usize> = ds.holdout_indices(HOLDOUT_EVERY).into_iter().take(n).collect();
    if idx.is_empty() {
        return Err(Error::config("no holdout images to evaluate"));
    }
    let xs = idx.iter().map(|&i| ds.images[i].clone()).collect();
    let ys = idx.iter().map(|&i| ds.labels[i]).collect();
    Ok((idx, xs, ys))
}

/// Other-class mixing images for Admix, drawn from the training split.
pub fn admix_pool(ds: &Dataset) -> Result<AdmixPool> {
    let idx: Vec<usize> = ds.train_indices(HOLDOUT_EVERY).into_iter().take(ADMIX_POOL_SIZE).collect();
    AdmixPool::new(idx.iter().map(|&i| ds.images[i].clone()).collect(), idx.iter().map(|&i| ds.labels[i]).collect())
}

enum Surrogate<'m> {
    Oracle(Box<dyn GradientOracle + 'm>),
    Longitude(Vec<&'m Model>, EnsembleSpec),
}

fn build_surrogate<'m>(exp: &'m Experiment<'_>, pool: &'m AdmixPool) -> Result<Surrogate<'m>> {
    let models: Vec<&'m Model> = exp.surrogates.iter().map(|s| &s.model).collect();
    match &exp.ensemble {
        Some(spec) => {
            if exp.transform.kind != TransformKind::None {
                return Err(Error::Unsupported("input transforms on top of an ensemble; use ait instead".into()));
            }
            if spec.fusion == FusionMode::Longitude {
                spec.validate(models.len())?;
                Ok(Surrogate::Longitude(models, spec.clone()))
            } else {
                Ok(Surrogate::Oracle(Box::new(LateralOracle::new(models, spec.clone(), exp.attack.eps)?)))
            }
        }
        None => {
            let [model] = models.as_slice() else {
                return Err(Error::config("several surrogates need an [ensemble] fusion mode"));
            };
            if exp.transform.kind == TransformKind::None {
                Ok(Surrogate::Oracle(Box::new(ModelOracle { model: *model, loss: exp.attack.loss })))
            } else {
                let t = Transformer::new(exp.transform, Classifier::input_shape(*model), exp.attack.eps)?;
                let mut o = TransformedOracle::new(*model, t);
                o.loss = exp.attack.loss;
                if exp.transform.kind == TransformKind::Admix {
                    o = o.with_pool(pool);
                }
                Ok(Surrogate::Oracle(Box::new(o)))
            }
        }
    }
}

/// Perturbations for every evaluation image (image `i` of the dataset uses
/// seed `derive_seed(seed, i)`), in index order.
pub fn craft_perturbations(exp: &Experiment<'_>, ds: &Dataset) -> Result<(Vec<Tensor>, Vec<usize>, Vec<Tensor>)> {
    exp.attack.validate()?;
    if exp.surrogates.is_empty() {
        return Err(Error::config("an experiment needs a surrogate"));
    }
    let (idx, xs, ys) = eval_split(ds, exp.n_eval)?;
    let pool = admix_pool(ds)?;
    let sur = build_surrogate(exp, &pool)?;
    let deltas = try_map_indexed(exp.exec, xs.len(), |j| {
        let seed = derive_seed(exp.seed, idx[j] as u64);
        match &sur {
            Surrogate::Oracle(o) => run_attack(&exp.attack, o.as_ref(), &xs[j], ys[j], seed),
            Surrogate::Longitude(models, spec) => {
                longitude_attack(models, spec, &xs[j], ys[j], &exp.attack, exp.attack.eps, seed)
            }
        }
    })?;
    Ok((xs, ys, deltas))
}

/// Attacks the surrogate(s) on the evaluation split and scores every
/// victim. Deterministic given the experiment (wall time aside).
pub fn run_experiment(exp: &Experiment<'_>, ds: &Dataset) -> Result<AttackReport> {
    let start = Instant::now();
    if exp.victims.is_empty() {
        return Err(Error::config("an experiment needs at least one victim"));
    }
    let (xs, ys, deltas) = craft_perturbations(exp, ds)?;
    let mut whitebox = 0.0;
    for s in &exp.surrogates {
        whitebox += rate_of(&evaluate_outcomes(&s.model, &xs, &ys, &deltas, exp.exec)?)?;
    }
    whitebox /= exp.surrogates.len() as f64;
    let mut victims = Vec::with_capacity(exp.victims.len());
    for v in &exp.victims {
        let outcomes = evaluate_outcomes(&v.model, &xs, &ys, &deltas, exp.exec)?;
        let transfer_asr = rate_of(&outcomes).map_err(|e| match e {
            Error::UndefinedRate(m) => Error::UndefinedRate(format!("victim {}: {m}", v.name)),
            other => other,
        })?;
        victims.push(VictimResult { name: v.name.clone(), clean_acc: clean_accuracy(&outcomes), transfer_asr, outcomes });
    }
    let k = victims.len() as f64;
    let mean_clean_acc = victims.iter().map(|v| v.clean_acc).sum::<f64>() / k;
    let mean_transfer_asr = victims.iter().map(|v| v.transfer_asr).sum::<f64>() / k;
    Ok(AttackReport {
        run_id: exp.run_id.clone(),
        method: exp.attack.method,
        tricks: exp.trick_label(),
        axis: None,
        surrogate: exp.surrogates.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join("|"),
        seed: exp.seed,
        n_eval: xs.len(),
        whitebox_asr: whitebox,
        victims,
        mean_clean_acc,
        mean_transfer_asr,
        wall_ms: if exp.timing { start.elapsed().as_millis() as u64 } else { 0 },
        config_echo: format!("{:?} | {:?} | {:?}", exp.attack, exp.transform, exp.ensemble),
    })
}
