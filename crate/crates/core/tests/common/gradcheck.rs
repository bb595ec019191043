//! Reverse-mode gradients against central finite differences, per layer kind.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use translab::diffcore::{
    evaluate_with_gradient, finite_difference_gradient, loss_node, Classifier, Graph, LossKind, NodeId,
    SparseMap, SpectralPlan, Tensor,
};
use translab::modelzoo::ArchId;
use translab::Result;

use super::fixtures::{model, random_tensor, rng};

pub const STEP: f64 = 1e-6;
/// Magnitudes below this are compared absolutely.
pub const FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct KindReport {
    pub kind: String,
    pub probes: usize,
    pub max_rel: f64,
}

pub fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

/// Which leaf of the case is probed.
#[derive(Clone, Copy)]
enum Wrt {
    Input,
    Weight,
    Bias,
}

type Body<'a> = dyn for<'g> Fn(&mut Graph<'g>, NodeId, NodeId, NodeId) -> Result<NodeId> + 'a;

/// One instance: input, weight and bias tensors and a body recording the op.
struct Case<'b> {
    x: Tensor,
    w: Tensor,
    b: Tensor,
    body: &'b Body<'b>,
}

/// `r · flatten(node)` as a scalar.
fn reduce(g: &mut Graph<'_>, node: NodeId, r: &Tensor) -> Result<NodeId> {
    let n = g.value(node).len();
    let flat = g.reshape(node, &[n])?;
    let w = g.leaf(r.clone().reshape(&[1, n])?, false)?;
    let b = g.leaf(Tensor::zeros(&[1]), false)?;
    let d = g.dense(flat, w, b)?;
    g.pick(d, 0)
}

fn run_case(case: &Case<'_>, wrt: Wrt, probes: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let build = |x: &Tensor, w: &Tensor, b: &Tensor, grad: bool| -> Result<(f64, Option<Tensor>)> {
        let mut g = Graph::new();
        let want = |k: Wrt| grad && std::mem::discriminant(&k) == std::mem::discriminant(&wrt);
        let xl = g.leaf(x.clone(), want(Wrt::Input))?;
        let wl = g.leaf(w.clone(), want(Wrt::Weight))?;
        let bl = g.leaf(b.clone(), want(Wrt::Bias))?;
        let out = (case.body)(&mut g, xl, wl, bl)?;
        let v = g.value(out).data()[0];
        if !grad {
            return Ok((v, None));
        }
        let mut gr = g.backward(out)?;
        let id = match wrt {
            Wrt::Input => xl,
            Wrt::Weight => wl,
            Wrt::Bias => bl,
        };
        Ok((v, gr.take(id)))
    };
    let (_, analytic) = build(&case.x, &case.w, &case.b, true)?;
    let target = match wrt {
        Wrt::Input => &case.x,
        Wrt::Weight => &case.w,
        Wrt::Bias => &case.b,
    };
    let analytic = analytic.unwrap_or_else(|| Tensor::zeros(target.shape()));
    let coords: Vec<usize> = (0..probes).map(|_| rng.random_range(0..target.len())).collect();
    let numeric = finite_difference_gradient(
        |t| {
            let r = match wrt {
                Wrt::Input => build(t, &case.w, &case.b, false),
                Wrt::Weight => build(&case.x, t, &case.b, false),
                Wrt::Bias => build(&case.x, &case.w, t, false),
            };
            r.map(|(v, _)| v)
        },
        target,
        STEP,
        &coords,
    )?;
    Ok(coords.iter().zip(&numeric).map(|(&c, &n)| rel_error(analytic.data()[c], n)).fold(0.0, f64::max))
}

/// Runs `instances` random instances of `make`, `per` probes each.
fn kind(
    name: &str,
    instances: usize,
    per: usize,
    seed: u64,
    wrts: &[Wrt],
    make: &dyn Fn(&mut ChaCha8Rng) -> (Tensor, Tensor, Tensor, Tensor),
    body: &Body<'_>,
) -> Result<KindReport> {
    let mut r = rng(seed);
    let mut max_rel: f64 = 0.0;
    let mut probes = 0;
    for i in 0..instances {
        let (x, w, b, proj) = make(&mut r);
        let wrt = wrts[i % wrts.len()];
        let reduced = move |g: &mut Graph<'_>, xl: NodeId, wl: NodeId, bl: NodeId| -> Result<NodeId> {
            let out = body(g, xl, wl, bl)?;
            if g.value(out).len() == 1 && proj.is_empty() {
                let n = g.value(out).len();
                let flat = g.reshape(out, &[n])?;
                g.pick(flat, 0)
            } else {
                reduce(g, out, &proj)
            }
        };
        let case = Case { x, w, b, body: &reduced };
        max_rel = max_rel.max(run_case(&case, wrt, per, &mut r)?);
        probes += per;
    }
    Ok(KindReport { kind: name.to_string(), probes, max_rel })
}

fn away_from_zero(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
    let mut t = random_tensor(shape, 0.05, 1.0, r);
    for v in t.data_mut() {
        if r.random::<bool>() {
            *v = -*v;
        }
    }
    t
}

fn empty() -> Tensor {
    Tensor::zeros(&[0])
}

/// Every layer kind of the graph plus the four zoo architectures end to end.
/// `instances × per` probes are taken per kind.
pub fn check_all(instances: usize, per: usize) -> Result<Vec<KindReport>> {
    use Wrt::*;
    let mut out = Vec::new();
    let proj = |shape: &[usize], r: &mut ChaCha8Rng| random_tensor(&[shape.iter().product()], -1.0, 1.0, r);

    out.push(kind(
        "dense",
        instances,
        per,
        1,
        &[Input, Weight, Bias],
        &|r| {
            let x = random_tensor(&[12], -1.0, 1.0, r);
            let w = random_tensor(&[5, 12], -1.0, 1.0, r);
            let b = random_tensor(&[5], -1.0, 1.0, r);
            (x, w, b, proj(&[5], r))
        },
        &|g, x, w, b| g.dense(x, w, b),
    )?);
    for pad in [0usize, 1] {
        out.push(kind(
            &format!("conv2d(pad={pad})"),
            instances,
            per,
            2 + pad as u64,
            &[Input, Weight, Bias],
            &|r| {
                let x = random_tensor(&[2, 6, 7], -1.0, 1.0, r);
                let w = random_tensor(&[3, 2, 3, 3], -1.0, 1.0, r);
                let b = random_tensor(&[3], -1.0, 1.0, r);
                let (oh, ow) = (6 + 2 * pad - 2, 7 + 2 * pad - 2);
                (x, w, b, proj(&[3, oh, ow], r))
            },
            &move |g, x, w, b| g.conv2d(x, w, b, pad),
        )?);
    }
    out.push(kind(
        "relu",
        instances,
        per,
        4,
        &[Input],
        &|r| (away_from_zero(&[20], r), empty(), empty(), proj(&[20], r)),
        &|g, x, _, _| g.relu(x),
    )?);
    out.push(kind(
        "avg_pool",
        instances,
        per,
        5,
        &[Input],
        &|r| (random_tensor(&[2, 6, 7], -1.0, 1.0, r), empty(), empty(), proj(&[2, 3, 3], r)),
        &|g, x, _, _| g.avg_pool(x, 2),
    )?);
    out.push(kind(
        "reshape",
        instances,
        per,
        6,
        &[Input],
        &|r| (random_tensor(&[2, 3, 4], -1.0, 1.0, r), empty(), empty(), proj(&[24], r)),
        &|g, x, _, _| g.reshape(x, &[6, 4]),
    )?);
    out.push(kind(
        "softmax",
        instances,
        per,
        7,
        &[Input],
        &|r| (random_tensor(&[7], -2.0, 2.0, r), empty(), empty(), proj(&[7], r)),
        &|g, x, _, _| g.softmax(x),
    )?);
    out.push(kind(
        "log",
        instances,
        per,
        8,
        &[Input],
        &|r| (random_tensor(&[10], 0.2, 2.0, r), empty(), empty(), proj(&[10], r)),
        &|g, x, _, _| g.log(x),
    )?);
    out.push(kind(
        "cross_entropy",
        instances,
        per,
        9,
        &[Input],
        &|r| (random_tensor(&[8], -3.0, 3.0, r), empty(), Tensor::scalar(r.random_range(0..8) as f64), empty()),
        &|g, x, _, b| {
            let label = g.value(b).data()[0] as usize;
            loss_node(g, x, label, LossKind::CrossEntropy)
        },
    )?);
    out.push(kind(
        "margin",
        instances,
        per,
        10,
        &[Input],
        &|r| (random_tensor(&[8], -3.0, 3.0, r), empty(), Tensor::scalar(r.random_range(0..8) as f64), empty()),
        &|g, x, _, b| {
            let label = g.value(b).data()[0] as usize;
            loss_node(g, x, label, LossKind::Margin)
        },
    )?);
    out.push(kind(
        "scale",
        instances,
        per,
        11,
        &[Input],
        &|r| (random_tensor(&[9], -1.0, 1.0, r), empty(), empty(), proj(&[9], r)),
        &|g, x, _, _| g.scale(x, -1.7),
    )?);
    out.push(kind(
        "mul_const",
        instances,
        per,
        12,
        &[Input],
        &|r| (random_tensor(&[9], -1.0, 1.0, r), random_tensor(&[9], -2.0, 2.0, r), empty(), proj(&[9], r)),
        &|g, x, w, _| {
            let m = g.value(w).clone();
            g.mul_const(x, m)
        },
    )?);
    out.push(kind(
        "add_const",
        instances,
        per,
        13,
        &[Input],
        &|r| (random_tensor(&[9], -1.0, 1.0, r), random_tensor(&[9], -2.0, 2.0, r), empty(), proj(&[9], r)),
        &|g, x, w, _| {
            let c = g.value(w).clone();
            let y = g.add_const(x, c)?;
            g.softmax(y)
        },
    )?);
    out.push(kind(
        "weighted_sum",
        instances,
        per,
        14,
        &[Input, Weight],
        &|r| (random_tensor(&[9], -1.0, 1.0, r), random_tensor(&[9], -1.0, 1.0, r), empty(), proj(&[9], r)),
        &|g, x, w, _| {
            let s = g.softmax(x)?;
            g.weighted_sum(&[(x, 0.7), (w, -1.3), (s, 2.1)])
        },
    )?);
    out.push(kind(
        "add",
        instances,
        per,
        15,
        &[Input, Weight],
        &|r| (random_tensor(&[9], -1.0, 1.0, r), random_tensor(&[9], -1.0, 1.0, r), empty(), proj(&[9], r)),
        &|g, x, w, _| {
            let s = g.softmax(x)?;
            let t = g.add(s, w)?;
            g.add(t, x)
        },
    )?);
    out.push(kind(
        "pick",
        instances,
        per,
        16,
        &[Input],
        &|r| (random_tensor(&[9], -1.0, 1.0, r), empty(), Tensor::scalar(r.random_range(0..9) as f64), empty()),
        &|g, x, _, b| {
            let i = g.value(b).data()[0] as usize;
            let s = g.softmax(x)?;
            g.pick(s, i)
        },
    )?);
    let plan = Arc::new(SpectralPlan::new(5, 7)?);
    let p1 = plan.clone();
    out.push(kind(
        "dct2",
        instances,
        per,
        17,
        &[Input],
        &|r| (random_tensor(&[2, 5, 7], 0.0, 1.0, r), empty(), empty(), proj(&[2, 5, 7], r)),
        &move |g, x, _, _| g.dct2(x, p1.clone()),
    )?);
    let p2 = plan.clone();
    out.push(kind(
        "idct2",
        instances,
        per,
        18,
        &[Input],
        &|r| (random_tensor(&[2, 5, 7], -1.0, 1.0, r), empty(), empty(), proj(&[2, 5, 7], r)),
        &move |g, x, _, _| g.idct2(x, p2.clone()),
    )?);
    let map = Arc::new(SparseMap::resize((6, 6), (9, 5)).then(&SparseMap::pad((9, 5), (11, 8), 1, 2))?);
    out.push(kind(
        "resample",
        instances,
        per,
        19,
        &[Input],
        &|r| (random_tensor(&[2, 6, 6], 0.0, 1.0, r), empty(), empty(), proj(&[2, 11, 8], r)),
        &move |g, x, _, _| g.resample(x, map.clone()),
    )?);
    for (i, arch) in ArchId::ALL.into_iter().enumerate() {
        out.push(model_kind(arch, instances, per, 30 + i as u64)?);
    }
    Ok(out)
}

/// End-to-end input gradient of a whole architecture under both losses.
fn model_kind(arch: ArchId, instances: usize, per: usize, seed: u64) -> Result<KindReport> {
    let mut r = rng(seed);
    let m = model(arch, seed);
    let mut max_rel: f64 = 0.0;
    for i in 0..instances {
        let x = random_tensor(Classifier::input_shape(&m), 0.0, 1.0, &mut r);
        let y = r.random_range(0..8);
        let loss = if i % 2 == 0 { LossKind::CrossEntropy } else { LossKind::Margin };
        let (_, g) = evaluate_with_gradient(&m, &x, y, loss)?;
        let coords: Vec<usize> = (0..per).map(|_| r.random_range(0..x.len())).collect();
        let f = |t: &Tensor| -> Result<f64> {
            let mut gr = Graph::new();
            let xl = gr.leaf(t.clone(), false)?;
            let z = m.logits(&mut gr, xl)?;
            let l = loss_node(&mut gr, z, y, loss)?;
            Ok(gr.value(l).data()[0])
        };
        let n = finite_difference_gradient(f, &x, STEP, &coords)?;
        for (&c, &nv) in coords.iter().zip(&n) {
            max_rel = max_rel.max(rel_error(g.data()[c], nv));
        }
    }
    Ok(KindReport { kind: format!("model {arch}"), probes: instances * per, max_rel })
}
