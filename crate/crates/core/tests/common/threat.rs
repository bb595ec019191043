//! Threat-model check over the method × trick × surrogate matrix: every
//! projected iterate must stay in the ε-box and keep `x + δ` in `[0, 1]`.

use std::sync::atomic::{AtomicUsize, Ordering};

use translab::attacks::{
    run_attack_observed, AttackConfig, DualSpec, GradientOracle, Method, ModelOracle, RgiSpec, ScheduleKind,
    ScheduleSpec, Stage,
};
use translab::diffcore::{Classifier, Tensor};
use translab::ensemble::{longitude_attack_observed, EnsembleSpec, FusionMode, LateralOracle};
use translab::modelzoo::Model;
use translab::par::{try_map_indexed, Execution};
use translab::transforms::{AdmixPool, TransformKind, TransformSpec, Transformer, TransformedOracle};

/// Slack allowed on the L∞ bound.
pub const SLACK: f64 = 1e-12;

/// Named attack-side trick settings: none, RGI, every schedule shape in both
/// directions, and dual examples with one and three duals.
pub fn tricks() -> Vec<(String, AttackConfig)> {
    let mut out = vec![("none".to_string(), AttackConfig::default())];
    out.push(("rgi".into(), AttackConfig { rgi: Some(RgiSpec { restarts: 2, pre_iters: 3, ..Default::default() }), ..Default::default() }));
    for kind in ScheduleKind::ALL {
        for inc in [false, true] {
            let spec = if inc { ScheduleSpec::new(kind).increasing() } else { ScheduleSpec::new(kind) };
            let name = format!("{kind}{}", if inc { "_inc" } else { "" });
            out.push((name, AttackConfig { schedule: spec, ..Default::default() }));
        }
    }
    for count in [1, 3] {
        let d = DualSpec { count, ..Default::default() };
        out.push((format!("dual{count}"), AttackConfig { dual: Some(d), ..Default::default() }));
    }
    out
}

fn with_method(base: &AttackConfig, method: Method) -> AttackConfig {
    AttackConfig { method, ..*base }
}

/// Checks one iterate; returns a description of the first violation.
pub fn violation(x: &Tensor, delta: &Tensor, eps: f64) -> Option<String> {
    for (i, (&xv, &dv)) in x.data().iter().zip(delta.data()).enumerate() {
        let a = xv + dv;
        if dv.abs() > eps + SLACK || !(0.0..=1.0).contains(&a) || !dv.is_finite() {
            return Some(format!("coordinate {i}: x = {xv}, delta = {dv}"));
        }
    }
    None
}

/// Runs one attack and checks every iterate it shows the observer.
/// Unprojected duals are outside the threat model and are skipped.
fn run_checked(
    cfg: &AttackConfig,
    oracle: &dyn GradientOracle,
    x: &Tensor,
    y: usize,
    seed: u64,
    seen: &AtomicUsize,
) -> Result<(), String> {
    let project_duals = cfg.dual.is_none_or(|d| d.project);
    let mut bad: Option<String> = None;
    let mut count = 0;
    let mut obs = |stage: Stage, d: &Tensor| {
        if matches!(stage, Stage::Dual(_)) && !project_duals {
            return;
        }
        count += 1;
        if bad.is_none() {
            bad = violation(x, d, cfg.eps).map(|v| format!("{stage:?}: {v}"));
        }
    };
    let st = run_attack_observed(cfg, oracle, x, y, seed, &mut obs).map_err(|e| e.to_string())?;
    seen.fetch_add(count, Ordering::Relaxed);
    if let Some(v) = bad.or_else(|| violation(x, &st.delta, cfg.eps)) {
        return Err(v);
    }
    Ok(())
}

pub struct MatrixReport {
    pub runs: usize,
    pub iterates: usize,
}

/// The full matrix on the given surrogates and images:
///
/// * every method × every trick on each single model;
/// * every method × {none, rgi, dual3} behind each input transform;
/// * every method × {none, rgi, dual3} against lateral ensembles (plain, GA,
///   AIT, aligned transforms) and × {none, rgi} against longitude with and
///   without model shuffling.
pub fn check_matrix(
    models: &[Model],
    xs: &[Tensor],
    ys: &[usize],
    pool: &AdmixPool,
    copies: usize,
) -> Result<MatrixReport, String> {
    let eps = AttackConfig::default().eps;
    let tricks = tricks();
    let seen = AtomicUsize::new(0);
    let runs = AtomicUsize::new(0);
    let reduced: Vec<&(String, AttackConfig)> =
        tricks.iter().filter(|(n, _)| ["none", "rgi", "dual3"].contains(&n.as_str())).collect();

    // single surrogate
    let jobs: Vec<(usize, usize, Method)> = (0..models.len())
        .flat_map(|m| (0..tricks.len()).flat_map(move |t| Method::ALL.into_iter().map(move |me| (m, t, me))))
        .collect();
    try_map_indexed(Execution::Parallel, jobs.len(), |j| {
        let (m, t, method) = jobs[j];
        let cfg = with_method(&tricks[t].1, method);
        let o = ModelOracle::new(&models[m]);
        for (i, (x, &y)) in xs.iter().zip(ys).enumerate() {
            run_checked(&cfg, &o, x, y, (j * 31 + i) as u64, &seen)
                .map_err(|e| format!("{method} + {} on model {m}: {e}", tricks[t].0))?;
            runs.fetch_add(1, Ordering::Relaxed);
        }
        Ok::<(), String>(())
    })?;

    // input transforms
    let model = &models[0];
    let shape = Classifier::input_shape(model).to_vec();
    let jobs: Vec<(TransformKind, usize, Method)> = TransformKind::ALL
        .into_iter()
        .flat_map(|k| (0..reduced.len()).flat_map(move |t| Method::ALL.into_iter().map(move |me| (k, t, me))))
        .collect();
    try_map_indexed(Execution::Parallel, jobs.len(), |j| {
        let (kind, t, method) = jobs[j];
        let cfg = with_method(&reduced[t].1, method);
        let tr = Transformer::new(TransformSpec::new(kind).with_copies(copies), &shape, eps).map_err(|e| e.to_string())?;
        let o = TransformedOracle::new(model, tr).with_pool(pool);
        for (i, (x, &y)) in xs.iter().zip(ys).enumerate() {
            run_checked(&cfg, &o, x, y, (j * 17 + i) as u64, &seen)
                .map_err(|e| format!("{method} + {} behind {kind}: {e}", reduced[t].0))?;
            runs.fetch_add(1, Ordering::Relaxed);
        }
        Ok::<(), String>(())
    })?;

    // ensembles
    let members: Vec<&Model> = models.iter().collect();
    let mut specs: Vec<(String, EnsembleSpec)> = Vec::new();
    for fusion in [FusionMode::Loss, FusionMode::Logit, FusionMode::Prediction] {
        specs.push((format!("{fusion}"), EnsembleSpec::new(fusion)));
        specs.push((format!("{fusion}+ga"), EnsembleSpec { ga_enabled: true, ..EnsembleSpec::new(fusion) }));
        specs.push((format!("{fusion}+ait"), EnsembleSpec { ait_enabled: true, ..EnsembleSpec::new(fusion) }));
        specs.push((
            format!("{fusion}+aligned"),
            EnsembleSpec { aligned_transforms: true, ..EnsembleSpec::new(fusion) },
        ));
    }
    let jobs: Vec<(usize, usize, Method)> = (0..specs.len())
        .flat_map(|s| (0..reduced.len()).flat_map(move |t| Method::ALL.into_iter().map(move |me| (s, t, me))))
        .collect();
    try_map_indexed(Execution::Parallel, jobs.len(), |j| {
        let (s, t, method) = jobs[j];
        let cfg = with_method(&reduced[t].1, method);
        let o = LateralOracle::new(members.clone(), specs[s].1.clone(), eps).map_err(|e| e.to_string())?;
        for (i, (x, &y)) in xs.iter().zip(ys).enumerate() {
            run_checked(&cfg, &o, x, y, (j * 13 + i) as u64, &seen)
                .map_err(|e| format!("{method} + {} on ensemble {}: {e}", reduced[t].0, specs[s].0))?;
            runs.fetch_add(1, Ordering::Relaxed);
        }
        Ok::<(), String>(())
    })?;

    let long = [
        EnsembleSpec::new(FusionMode::Longitude),
        EnsembleSpec { ms_enabled: true, ..EnsembleSpec::new(FusionMode::Longitude) },
    ];
    let jobs: Vec<(usize, usize, Method)> = (0..long.len())
        .flat_map(|s| (0..2).flat_map(move |t| Method::ALL.into_iter().map(move |me| (s, t, me))))
        .collect();
    try_map_indexed(Execution::Parallel, jobs.len(), |j| {
        let (s, t, method) = jobs[j];
        let cfg = with_method(&reduced[t].1, method);
        for (i, (x, &y)) in xs.iter().zip(ys).enumerate() {
            let mut bad: Option<String> = None;
            let mut count = 0;
            let mut obs = |stage: Stage, d: &Tensor| {
                count += 1;
                if bad.is_none() {
                    bad = violation(x, d, eps).map(|v| format!("{stage:?}: {v}"));
                }
            };
            let d = longitude_attack_observed(&members, &long[s], x, y, &cfg, eps, (j * 7 + i) as u64, &mut obs)
                .map_err(|e| e.to_string())?;
            seen.fetch_add(count, Ordering::Relaxed);
            if let Some(v) = bad.or_else(|| violation(x, &d, eps)) {
                return Err(format!("{method} + {} on longitude #{s}: {v}", reduced[t].0));
            }
            runs.fetch_add(1, Ordering::Relaxed);
        }
        Ok::<(), String>(())
    })?;

    Ok(MatrixReport { runs: runs.into_inner(), iterates: seen.into_inner() })
}
