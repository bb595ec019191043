//! Parameter settings under which one attack must collapse bit-for-bit onto
//! a simpler one.

use rand_chacha::ChaCha8Rng;

use translab::attacks::{
    gi_warmup, make_schedule, rgi_initialize, run_attack, AttackConfig, DualSpec, GradientOracle, Method, ModelOracle,
    RandomInit, RgiSpec, ScheduleKind, ScheduleSpec,
};
use translab::diffcore::Tensor;
use translab::modelzoo::Model;
use translab::Result;

use super::fixtures::bit_equal;

/// Returns the same gradient everywhere.
pub struct ConstOracle {
    pub grad: Tensor,
}

impl GradientOracle for ConstOracle {
    fn input_shape(&self) -> &[usize] {
        self.grad.shape()
    }

    fn gradient(&self, _x: &Tensor, _label: usize, _rng: &mut ChaCha8Rng) -> Result<Tensor> {
        Ok(self.grad.clone())
    }
}

fn check(ok: bool, what: String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what)
    }
}

pub type Cases<'a> = (&'a [Model], &'a [Tensor], &'a [usize]);

/// MI with γ = 0 and no normalisation is I-FGSM.
pub fn mi_without_decay(cases: Cases<'_>) -> std::result::Result<(), String> {
    let (models, xs, ys) = cases;
    for (mi, m) in models.iter().enumerate() {
        let o = ModelOracle::new(m);
        for (i, (x, &y)) in xs.iter().zip(ys).enumerate() {
            let mut mcfg = AttackConfig::new(Method::Mifgsm);
            mcfg.decay = 0.0;
            mcfg.normalize = false;
            let a = run_attack(&mcfg, &o, x, y, i as u64).map_err(|e| e.to_string())?;
            let b = run_attack(&AttackConfig::new(Method::Ifgsm), &o, x, y, i as u64).map_err(|e| e.to_string())?;
            check(bit_equal(&a, &b), format!("model {mi} image {i}"))?;
        }
    }
    Ok(())
}

/// RGI with one restart from a zero start is the GI warm-up, both as an
/// initial momentum and through the whole attack.
pub fn rgi_single_zero_start(cases: Cases<'_>) -> std::result::Result<(), String> {
    let (models, xs, ys) = cases;
    for (mi, m) in models.iter().enumerate() {
        let o = ModelOracle::new(m);
        for (i, (x, &y)) in xs.iter().zip(ys).enumerate() {
            let gi = AttackConfig::new(Method::Gimifgsm);
            let spec = RgiSpec { restarts: 1, pre_iters: gi.params.gimi_pre_iters, init: RandomInit::Zero };
            let mut rgi = AttackConfig::new(Method::Mifgsm);
            rgi.rgi = Some(spec);
            let seed = 7 + i as u64;
            let m_gi = gi_warmup(&o, x, y, &gi, seed).map_err(|e| e.to_string())?;
            let m_rgi = rgi_initialize(&o, x, y, &rgi, &spec, seed).map_err(|e| e.to_string())?;
            check(bit_equal(&m_gi, &m_rgi), format!("momentum, model {mi} image {i}"))?;
            let a = run_attack(&gi, &o, x, y, seed).map_err(|e| e.to_string())?;
            let b = run_attack(&rgi, &o, x, y, seed).map_err(|e| e.to_string())?;
            check(bit_equal(&a, &b), format!("attack, model {mi} image {i}"))?;
        }
    }
    Ok(())
}

/// One zero-started dual with γ = 0 under a constant gradient is I-FGSM
/// with the dual's step schedule, for every schedule shape.
pub fn single_dual_constant_gradient(xs: &[Tensor], grads: &[Tensor]) -> std::result::Result<(), String> {
    for (i, (x, g)) in xs.iter().zip(grads).enumerate() {
        let o = ConstOracle { grad: g.clone() };
        for kind in ScheduleKind::ALL {
            let sched = ScheduleSpec::new(kind).increasing();
            let mut dual = AttackConfig::new(Method::Mifgsm);
            dual.decay = 0.0;
            dual.normalize = false;
            dual.dual = Some(DualSpec { count: 1, schedule: sched, project: true, init: RandomInit::Zero });
            let mut plain = AttackConfig::new(Method::Ifgsm);
            plain.schedule = sched;
            let a = run_attack(&dual, &o, x, 0, i as u64).map_err(|e| e.to_string())?;
            let b = run_attack(&plain, &o, x, 0, i as u64).map_err(|e| e.to_string())?;
            check(bit_equal(&a, &b), format!("schedule {kind}, case {i}"))?;
        }
    }
    Ok(())
}

/// The pvalue schedule with p = 0 is the identity schedule, as weights and
/// as attacks.
pub fn pvalue_zero(cases: Cases<'_>) -> std::result::Result<(), String> {
    let (models, xs, ys) = cases;
    let p0 = ScheduleSpec { p: 0.0, ..ScheduleSpec::new(ScheduleKind::PValue) };
    for t in 1..=40 {
        for dir in [p0, p0.increasing()] {
            let a = make_schedule(&dir, t).map_err(|e| e.to_string())?;
            let b = make_schedule(&ScheduleSpec::new(ScheduleKind::Identity), t).map_err(|e| e.to_string())?;
            let same = a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits());
            check(same, format!("weights, T = {t}"))?;
        }
    }
    for (mi, m) in models.iter().enumerate() {
        let o = ModelOracle::new(m);
        for (i, (x, &y)) in xs.iter().zip(ys).enumerate() {
            for method in [Method::Ifgsm, Method::Mifgsm] {
                let mut pv = AttackConfig::new(method);
                pv.schedule = p0;
                let a = run_attack(&pv, &o, x, y, i as u64).map_err(|e| e.to_string())?;
                let b = run_attack(&AttackConfig::new(method), &o, x, y, i as u64).map_err(|e| e.to_string())?;
                check(bit_equal(&a, &b), format!("{method}, model {mi} image {i}"))?;
            }
        }
    }
    Ok(())
}

/// FGSM is I-FGSM with a single iteration.
pub fn fgsm_single_step(cases: Cases<'_>) -> std::result::Result<(), String> {
    let (models, xs, ys) = cases;
    for (mi, m) in models.iter().enumerate() {
        let o = ModelOracle::new(m);
        for (i, (x, &y)) in xs.iter().zip(ys).enumerate() {
            let a = run_attack(&AttackConfig::new(Method::Fgsm), &o, x, y, 0).map_err(|e| e.to_string())?;
            let mut one = AttackConfig::new(Method::Ifgsm);
            one.iters = 1;
            let b = run_attack(&one, &o, x, y, 0).map_err(|e| e.to_string())?;
            check(bit_equal(&a, &b), format!("model {mi} image {i}"))?;
        }
    }
    Ok(())
}
