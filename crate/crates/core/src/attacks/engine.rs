//! The iterative attack driver.
//!
//! Random draws are taken from per-role ChaCha streams of the attack seed:
//! the main stream feeds the main iterate's estimators, warm-up restart `n`
//! draws its start and then its oracle noise from `WARMUP + n`, and dual `n`
//! draws its start and then its estimator noise from `DUAL + n`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::attacks::config::{AttackConfig, Method, RandomInit, RgiSpec};
use crate::attacks::oracle::{stream_rng, streams, uniform_start, GradientOracle};
use crate::attacks::schedule::make_schedule;
use crate::diffcore::{mean_of, project_linf_in_place, Tensor};
use crate::error::{Error, Result};

/// The iterate of one attack.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationState {
    /// δ_t
    pub delta: Tensor,
    /// m_t
    pub momentum: Tensor,
    /// Completed main iterations.
    pub iter: usize,
    /// δ^dual_{n,t}
    pub duals: Vec<Tensor>,
    /// VMI's v_t.
    pub variance: Tensor,
    /// EMI's sampling direction (previous averaged gradient, mean-abs normalised).
    pub prev_direction: Tensor,
    /// PI's accumulated amplified perturbation.
    pub pi_accumulator: Tensor,
}

impl PerturbationState {
    pub fn new(shape: &[usize]) -> Self {
        let z = Tensor::zeros(shape);
        PerturbationState {
            delta: z.clone(),
            momentum: z.clone(),
            iter: 0,
            duals: Vec::new(),
            variance: z.clone(),
            prev_direction: z.clone(),
            pi_accumulator: z,
        }
    }
}

/// Which iterate an observer is being shown.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Momentum warm-up restart `n` (GI uses restart 0).
    Warmup(usize),
    Dual(usize),
    Main,
}

/// `g / mean|g|`, or `g` unchanged when it is identically zero.
pub fn normalize_mean_abs(g: &Tensor) -> Tensor {
    let s = g.mean_abs();
    if s > 0.0 {
        g.map(|v| v / s)
    } else {
        g.clone()
    }
}

fn accumulate(momentum: &Tensor, decay: f64, g: &Tensor, normalize: bool) -> Tensor {
    let gn = if normalize { normalize_mean_abs(g) } else { g.clone() };
    momentum.zip_map(&gn, |m, v| decay * m + v)
}

/// `δ ← Π(δ + α · sign(d))`
fn sign_step(x: &Tensor, delta: &mut Tensor, direction: &Tensor, alpha: f64, eps: f64) {
    for (d, &m) in delta.data_mut().iter_mut().zip(direction.data()) {
        *d += alpha * crate::diffcore::sign(m);
    }
    project_linf_in_place(x, delta, eps);
}

fn offset_point(x: &Tensor, base: &Tensor, offset: Option<&Tensor>) -> Tensor {
    let mut p = x.add(base);
    if let Some(o) = offset {
        p.add_assign(o);
    }
    p
}

fn check_inputs(cfg: &AttackConfig, oracle: &dyn GradientOracle, x: &Tensor) -> Result<()> {
    cfg.validate()?;
    if x.shape() != oracle.input_shape() {
        return Err(Error::config(format!(
            "image shape {:?} does not match oracle input {:?}",
            x.shape(),
            oracle.input_shape()
        )));
    }
    if x.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::config("clean image must lie in [0, 1]"));
    }
    Ok(())
}

/// One warm-up run: `m ← ∇L(x+δ) (+norm) + γ m`, `δ ← Π(δ + α sign m)` for
/// `pre_iters` steps from `start`, returning the final momentum.
#[allow(clippy::too_many_arguments)]
fn warmup_run(
    oracle: &dyn GradientOracle,
    x: &Tensor,
    label: usize,
    cfg: &AttackConfig,
    start: Tensor,
    pre_iters: usize,
    rng: &mut ChaCha8Rng,
    stage: Stage,
    observer: &mut dyn FnMut(Stage, &Tensor),
) -> Result<Tensor> {
    let alpha = cfg.base_step();
    let mut delta = start;
    let mut m = Tensor::zeros(x.shape());
    for _ in 0..pre_iters {
        let g = oracle.gradient(&x.add(&delta), label, rng)?;
        m = accumulate(&m, cfg.decay, &g, cfg.normalize);
        sign_step(x, &mut delta, &m, alpha, cfg.eps);
        observer(stage, &delta);
    }
    Ok(m)
}

/// Random global momentum initialisation: the mean of the final momenta of
/// `rgi.restarts` warm-up runs started at random points of the ε-ball.
/// Restart `n` uses stream `WARMUP + n` of `seed`.
pub fn rgi_initialize(
    oracle: &dyn GradientOracle,
    x: &Tensor,
    label: usize,
    cfg: &AttackConfig,
    rgi: &RgiSpec,
    seed: u64,
) -> Result<Tensor> {
    rgi_observed(oracle, x, label, cfg, rgi, seed, &mut |_, _| {})
}

fn rgi_observed(
    oracle: &dyn GradientOracle,
    x: &Tensor,
    label: usize,
    cfg: &AttackConfig,
    rgi: &RgiSpec,
    seed: u64,
    observer: &mut dyn FnMut(Stage, &Tensor),
) -> Result<Tensor> {
    if rgi.restarts == 0 || rgi.pre_iters == 0 {
        return Err(Error::config("RGI needs N ≥ 1 restarts and T' ≥ 1 warm-up iterations"));
    }
    let mut momenta = Vec::with_capacity(rgi.restarts);
    for n in 0..rgi.restarts {
        let mut rng = stream_rng(seed, streams::WARMUP + n as u64);
        let start = match rgi.init {
            RandomInit::Uniform => uniform_start(x, cfg.eps, &mut rng),
            RandomInit::Zero => Tensor::zeros(x.shape()),
        };
        momenta.push(warmup_run(oracle, x, label, cfg, start, rgi.pre_iters, &mut rng, Stage::Warmup(n), observer)?);
    }
    Ok(mean_of(&momenta))
}

/// GIMI's warm-up: `T'` momentum iterations from δ = 0 on stream `WARMUP`.
pub fn gi_warmup(
    oracle: &dyn GradientOracle,
    x: &Tensor,
    label: usize,
    cfg: &AttackConfig,
    seed: u64,
) -> Result<Tensor> {
    let mut rng = stream_rng(seed, streams::WARMUP);
    warmup_run(
        oracle,
        x,
        label,
        cfg,
        Tensor::zeros(x.shape()),
        cfg.params.gimi_pre_iters,
        &mut rng,
        Stage::Warmup(0),
        &mut |_, _| {},
    )
}

struct Estimate {
    grad: Tensor,
    neighbor: Option<Tensor>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// The method's gradient estimate with the iterate at `base`.
fn estimate(
    cfg: &AttackConfig,
    oracle: &dyn GradientOracle,
    x: &Tensor,
    label: usize,
    base: &Tensor,
    st: &PerturbationState,
    alpha: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Estimate> {
    let p = &cfg.params;
    match cfg.method {
        Method::Nifgsm => {
            let look = st.momentum.sign().scale(p.ni_lookahead);
            let g = oracle.gradient(&offset_point(x, base, Some(&look)), label, rng)?;
            Ok(Estimate { grad: g, neighbor: None })
        }
        Method::Emifgsm => {
            let mut grads = Vec::with_capacity(p.emi_samples);
            for c in linspace(-p.emi_radius, p.emi_radius, p.emi_samples) {
                let off = st.prev_direction.scale(c * alpha);
                grads.push(oracle.gradient(&offset_point(x, base, Some(&off)), label, rng)?);
            }
            Ok(Estimate { grad: mean_of(&grads), neighbor: None })
        }
        Method::Vmifgsm => {
            let g = oracle.gradient(&offset_point(x, base, None), label, rng)?;
            let r = p.vmi_beta * cfg.eps;
            let mut samples = Vec::with_capacity(p.vmi_samples);
            for _ in 0..p.vmi_samples {
                let mut off = Tensor::zeros(x.shape());
                for v in off.data_mut() {
                    *v = rng.random_range(-r..=r);
                }
                samples.push(oracle.gradient(&offset_point(x, base, Some(&off)), label, rng)?);
            }
            Ok(Estimate { grad: g, neighbor: Some(mean_of(&samples)) })
        }
        _ => {
            let g = oracle.gradient(&offset_point(x, base, None), label, rng)?;
            Ok(Estimate { grad: g, neighbor: None })
        }
    }
}

fn spatial_dims(shape: &[usize]) -> (usize, usize, usize) {
    match shape {
        [c, h, w] => (*c, *h, *w),
        [h, w] => (1, *h, *w),
        _ => (1, 1, shape.iter().product()),
    }
}

/// PI's project kernel: uniform over the `k × k` neighbourhood, centre zero,
/// zero padding. Only the sign of the result is used.
fn neighbour_sum(t: &Tensor, k: usize) -> Tensor {
    let (c, h, w) = spatial_dims(t.shape());
    let r = (k / 2) as isize;
    let d = t.data();
    let mut out = Tensor::zeros(t.shape());
    let o = out.data_mut();
    for ch in 0..c {
        for i in 0..h as isize {
            for j in 0..w as isize {
                let mut acc = 0.0;
                for di in -r..=r {
                    for dj in -r..=r {
                        let (ii, jj) = (i + di, j + dj);
                        if (di, dj) == (0, 0) || ii < 0 || jj < 0 || ii >= h as isize || jj >= w as isize {
                            continue;
                        }
                        acc += d[(ch * h + ii as usize) * w + jj as usize];
                    }
                }
                o[(ch * h + i as usize) * w + j as usize] = acc;
            }
        }
    }
    out
}

fn apply_update(cfg: &AttackConfig, x: &Tensor, st: &mut PerturbationState, est: Estimate, alpha: f64) {
    let g = match (cfg.method, &est.neighbor) {
        (Method::Vmifgsm, Some(nb)) => {
            let used = est.grad.add(&st.variance);
            st.variance = nb.sub(&est.grad);
            used
        }
        _ => est.grad,
    };
    if cfg.method == Method::Emifgsm {
        st.prev_direction = normalize_mean_abs(&g);
    }
    st.momentum = if cfg.method.uses_momentum() { accumulate(&st.momentum, cfg.decay, &g, cfg.normalize) } else { g };
    if cfg.method == Method::Pifgsm {
        let amp = cfg.params.pi_amplification * alpha;
        let step = st.momentum.sign().scale(amp);
        st.pi_accumulator.add_assign(&step);
        let eps = cfg.eps;
        let cut = st.pi_accumulator.map(|a| crate::diffcore::sign(a) * (a.abs() - eps).max(0.0));
        let proj = neighbour_sum(&cut, cfg.params.pi_kernel).sign().scale(amp);
        st.pi_accumulator.add_assign(&proj);
        st.delta.add_assign(&step);
        st.delta.add_assign(&proj);
        project_linf_in_place(x, &mut st.delta, eps);
    } else {
        sign_step(x, &mut st.delta, &st.momentum, alpha, cfg.eps);
    }
}

/// Momentum before the first main iteration: RGI if configured, else the
/// GIMI warm-up for that method, else zero.
fn initial_momentum(
    cfg: &AttackConfig,
    oracle: &dyn GradientOracle,
    x: &Tensor,
    label: usize,
    seed: u64,
    observer: &mut dyn FnMut(Stage, &Tensor),
) -> Result<Tensor> {
    if let Some(rgi) = &cfg.rgi {
        rgi_observed(oracle, x, label, cfg, rgi, seed, observer)
    } else if cfg.method == Method::Gimifgsm {
        let mut rng = stream_rng(seed, streams::WARMUP);
        warmup_run(
            oracle,
            x,
            label,
            cfg,
            Tensor::zeros(x.shape()),
            cfg.params.gimi_pre_iters,
            &mut rng,
            Stage::Warmup(0),
            observer,
        )
    } else {
        Ok(Tensor::zeros(x.shape()))
    }
}

/// Runs the configured attack and returns the final perturbation δ_T.
pub fn run_attack(
    cfg: &AttackConfig,
    oracle: &dyn GradientOracle,
    x: &Tensor,
    label: usize,
    seed: u64,
) -> Result<Tensor> {
    run_attack_observed(cfg, oracle, x, label, seed, &mut |_, _| {}).map(|s| s.delta)
}

/// [`run_attack`] that shows every iterate (warm-up, dual and main) to
/// `observer` right after it is projected, and returns the final state.
pub fn run_attack_observed(
    cfg: &AttackConfig,
    oracle: &dyn GradientOracle,
    x: &Tensor,
    label: usize,
    seed: u64,
    observer: &mut dyn FnMut(Stage, &Tensor),
) -> Result<PerturbationState> {
    check_inputs(cfg, oracle, x)?;
    let iters = cfg.effective_iters();
    let mut st = PerturbationState::new(x.shape());
    st.momentum = initial_momentum(cfg, oracle, x, label, seed, observer)?;
    let weights = match &cfg.dual {
        Some(d) => make_schedule(&d.schedule, iters)?,
        None => make_schedule(&cfg.schedule, iters)?,
    };
    let mut main_rng = stream_rng(seed, streams::MAIN);
    let mut dual_rngs = Vec::new();
    if let Some(d) = &cfg.dual {
        for n in 0..d.count {
            let mut rng = stream_rng(seed, streams::DUAL + n as u64);
            st.duals.push(match d.init {
                RandomInit::Uniform => uniform_start(x, cfg.eps, &mut rng),
                RandomInit::Zero => Tensor::zeros(x.shape()),
            });
            dual_rngs.push(rng);
        }
    }
    for &w in &weights {
        let alpha = cfg.eps * cfg.step_scale * w;
        let est = match &cfg.dual {
            None => estimate(cfg, oracle, x, label, &st.delta, &st, alpha, &mut main_rng)?,
            Some(d) => {
                let mut grads = Vec::with_capacity(d.count);
                let mut neighbors = Vec::new();
                for n in 0..d.count {
                    let e = estimate(cfg, oracle, x, label, &st.duals[n], &st, alpha, &mut dual_rngs[n])?;
                    let dual = &mut st.duals[n];
                    for (dv, &gv) in dual.data_mut().iter_mut().zip(e.grad.data()) {
                        *dv += alpha * crate::diffcore::sign(gv);
                    }
                    if d.project {
                        project_linf_in_place(x, dual, cfg.eps);
                    }
                    observer(Stage::Dual(n), &st.duals[n]);
                    grads.push(e.grad);
                    if let Some(nb) = e.neighbor {
                        neighbors.push(nb);
                    }
                }
                Estimate {
                    grad: mean_of(&grads),
                    neighbor: if neighbors.is_empty() { None } else { Some(mean_of(&neighbors)) },
                }
            }
        };
        apply_update(cfg, x, &mut st, est, alpha);
        st.iter += 1;
        observer(Stage::Main, &st.delta);
    }
    Ok(st)
}

/// Sequential variant: iteration `t` takes one update step per entry of
/// `orders[t]`, each against the indexed oracle, with δ and momentum carried
/// across steps. Warm-ups run against `warmup`. Dual examples are not
/// supported here.
#[allow(clippy::too_many_arguments)]
pub fn run_sequence_observed(
    cfg: &AttackConfig,
    oracles: &[&dyn GradientOracle],
    warmup: &dyn GradientOracle,
    orders: &[Vec<usize>],
    x: &Tensor,
    label: usize,
    seed: u64,
    observer: &mut dyn FnMut(Stage, &Tensor),
) -> Result<PerturbationState> {
    if cfg.dual.is_some() {
        return Err(Error::Unsupported("dual examples with a sequential ensemble".into()));
    }
    let Some(first) = oracles.first() else {
        return Err(Error::config("sequential attack needs at least one oracle"));
    };
    check_inputs(cfg, *first, x)?;
    if oracles.iter().any(|o| o.input_shape() != first.input_shape()) {
        return Err(Error::config("ensemble members disagree on input shape"));
    }
    let iters = cfg.effective_iters();
    if orders.len() != iters || orders.iter().flatten().any(|&k| k >= oracles.len()) {
        return Err(Error::config("model orders must cover every iteration with valid indices"));
    }
    let mut st = PerturbationState::new(x.shape());
    st.momentum = initial_momentum(cfg, warmup, x, label, seed, observer)?;
    let weights = make_schedule(&cfg.schedule, iters)?;
    let mut rng = stream_rng(seed, streams::MAIN);
    for (t, &w) in weights.iter().enumerate() {
        let alpha = cfg.eps * cfg.step_scale * w;
        for &k in &orders[t] {
            let est = estimate(cfg, oracles[k], x, label, &st.delta, &st, alpha, &mut rng)?;
            apply_update(cfg, x, &mut st, est, alpha);
            observer(Stage::Main, &st.delta);
        }
        st.iter += 1;
    }
    Ok(st)
}

/// Dual examples with ensemble on top of the configured method.
pub fn dual_example_attack(
    oracle: &dyn GradientOracle,
    x: &Tensor,
    label: usize,
    cfg: &AttackConfig,
    dual: &crate::attacks::config::DualSpec,
    seed: u64,
) -> Result<Tensor> {
    if dual.count == 0 {
        return Err(Error::config("dual example count must be at least 1"));
    }
    let cfg = AttackConfig { dual: Some(*dual), ..*cfg };
    run_attack(&cfg, oracle, x, label, seed)
}
