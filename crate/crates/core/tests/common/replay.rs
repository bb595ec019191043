//! Line-by-line scripted versions of the three published algorithm boxes.
//!
//! They share only primitives with the library (model gradients, ChaCha
//! streams and the L∞/pixel clip written out below) and follow the boxes'
//! control flow and arithmetic order directly. The main iterate is clipped
//! into the threat model after every step.

use rand::Rng;

use translab::attacks::{stream_rng, streams};
use translab::diffcore::{evaluate_with_gradient, LossKind, Tensor};
use translab::modelzoo::Model;

fn grad(model: &Model, x: &Tensor, delta: &[f64], y: usize) -> Vec<f64> {
    let xa = Tensor::new(x.shape().to_vec(), x.data().iter().zip(delta).map(|(a, b)| a + b).collect()).unwrap();
    evaluate_with_gradient(model, &xa, y, LossKind::CrossEntropy).unwrap().1.into_data()
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn clip(x: f64, d: f64, eps: f64) -> f64 {
    let d = d.clamp(-eps, eps);
    (x + d).clamp(0.0, 1.0) - x
}

fn random_start(x: &Tensor, eps: f64, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..x.len()).map(|_| rng.random_range(-eps..=eps)).collect();
    x.data().iter().zip(raw).map(|(&xv, d)| clip(xv, d, eps)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn to_tensor(x: &Tensor, d: Vec<f64>) -> Tensor {
    Tensor::new(x.shape().to_vec(), d).unwrap()
}

/// Random global momentum initialisation followed by MI-FGSM
/// (no gradient normalisation), constant step α = ε·(1/T).
#[allow(clippy::too_many_arguments)]
pub fn rgi(
    model: &Model,
    x: &Tensor,
    y: usize,
    eps: f64,
    t_main: usize,
    t_pre: usize,
    restarts: usize,
    gamma: f64,
    seed: u64,
) -> Tensor {
    let n = x.len();
    let alpha = eps * (1.0 / t_main as f64);
    let mut finals: Vec<Vec<f64>> = Vec::new();
    for r in 0..restarts {
        let mut rng = stream_rng(seed, streams::WARMUP + r as u64);
        let mut m = vec![0.0; n];
        let mut delta = random_start(x, eps, &mut rng);
        for _ in 0..t_pre {
            let g = grad(model, x, &delta, y);
            for i in 0..n {
                m[i] = gamma * m[i] + g[i];
                delta[i] = clip(x.data()[i], delta[i] + alpha * sign(m[i]), eps);
            }
        }
        finals.push(m);
    }
    let mut m = finals[0].clone();
    for f in &finals[1..] {
        for i in 0..n {
            m[i] += f[i];
        }
    }
    for v in m.iter_mut() {
        *v /= restarts as f64;
    }
    let mut delta = vec![0.0; n];
    for _ in 0..t_main {
        let g = grad(model, x, &delta, y);
        for i in 0..n {
            m[i] = gamma * m[i] + g[i];
            delta[i] = clip(x.data()[i], delta[i] + alpha * sign(m[i]), eps);
        }
    }
    to_tensor(x, delta)
}

/// Increasing linear step weights `α_t / ε`.
pub fn increasing_linear(t: usize) -> Vec<f64> {
    let tf = t as f64;
    let raw: Vec<f64> = (1..=t).map(|i| tf - i as f64 + 1.0).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.into_iter().map(|v| v / total).collect();
    w.reverse();
    w
}

/// Dual examples with ensemble: `duals` unclipped I-FGSM trajectories from
/// uniform random starts feed the main MI-FGSM momentum, increasing linear
/// steps.
pub fn dual(model: &Model, x: &Tensor, y: usize, eps: f64, t_main: usize, duals: usize, gamma: f64, seed: u64) -> Tensor {
    let n = x.len();
    let w = increasing_linear(t_main);
    let mut rngs: Vec<_> = (0..duals).map(|k| stream_rng(seed, streams::DUAL + k as u64)).collect();
    let mut dual: Vec<Vec<f64>> = rngs.iter_mut().map(|r| random_start(x, eps, r)).collect();
    let mut delta = vec![0.0; n];
    let mut m = vec![0.0; n];
    for wt in w {
        let alpha = eps * wt;
        let mut gs: Vec<Vec<f64>> = Vec::new();
        for d in dual.iter_mut() {
            let g = grad(model, x, d, y);
            for i in 0..n {
                d[i] += alpha * sign(g[i]);
            }
            gs.push(g);
        }
        let mut mean = gs[0].clone();
        for g in &gs[1..] {
            for i in 0..n {
                mean[i] += g[i];
            }
        }
        for i in 0..n {
            mean[i] /= duals as f64;
            m[i] = gamma * m[i] + mean[i];
            delta[i] = clip(x.data()[i], delta[i] + alpha * sign(m[i]), eps);
        }
    }
    to_tensor(x, delta)
}

/// Ensemble I-FGSM with sign-rule gradient alignment.
pub fn ga(models: &[&Model], x: &Tensor, y: usize, eps: f64, t_main: usize) -> Tensor {
    let n = x.len();
    let k = models.len();
    let alpha = eps * (1.0 / t_main as f64);
    let mut delta = vec![0.0; n];
    for _ in 0..t_main {
        let gs: Vec<Vec<f64>> = models.iter().map(|m| grad(m, x, &delta, y)).collect();
        let mut total = gs[0].clone();
        for g in &gs[1..] {
            for i in 0..n {
                total[i] += g[i];
            }
        }
        let mut aligned = Vec::with_capacity(k);
        for g in &gs {
            let avg: Vec<f64> = (0..n).map(|i| (total[i] - g[i]) / (k - 1) as f64).collect();
            let sg: Vec<f64> = g.iter().map(|&v| sign(v)).collect();
            let sa: Vec<f64> = avg.iter().map(|&v| sign(v)).collect();
            let aa = dot(&avg, &avg);
            if aa > 0.0 && dot(&sg, &sa) < 0.0 {
                let c = dot(g, &avg) / aa;
                aligned.push((0..n).map(|i| g[i] - c * avg[i]).collect::<Vec<f64>>());
            } else {
                aligned.push(g.clone());
            }
        }
        let mut sum = aligned[0].clone();
        for g in &aligned[1..] {
            for i in 0..n {
                sum[i] += g[i];
            }
        }
        for i in 0..n {
            delta[i] = clip(x.data()[i], delta[i] + alpha * sign(sum[i]), eps);
        }
    }
    to_tensor(x, delta)
}
