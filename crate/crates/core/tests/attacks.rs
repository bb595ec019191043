mod common;

use common::degeneracy::{self, ConstOracle};
use common::fixtures::{bit_equal, glyphs, random_tensor, rng, untrained_models, EPS};
use common::replay;
use proptest::prelude::*;
use translab::attacks::{
    dual_example_attack, make_schedule, rgi_initialize, run_attack, run_attack_observed, AttackConfig, Direction,
    DualSpec, Method, ModelOracle, RandomInit, RgiSpec, ScheduleKind, ScheduleSpec, Stage,
};
use translab::diffcore::Tensor;

fn dyadic_gradient(seed: u64) -> Tensor {
    let mut r = rng(seed);
    let mut g = random_tensor(&[1, 16, 16], -4.0, 4.0, &mut r);
    for v in g.data_mut() {
        *v = (*v * 8.0).round() / 8.0 + 0.0;
    }
    g
}

fn mid_gray() -> Tensor {
    Tensor::full(&[1, 16, 16], 0.5)
}

#[test]
fn constant_gradient_ifgsm_reaches_the_box_corner() {
    let g = dyadic_gradient(1);
    let o = ConstOracle { grad: g.clone() };
    let d = run_attack(&AttackConfig::new(Method::Ifgsm), &o, &mid_gray(), 0, 0).unwrap();
    for (dv, gv) in d.data().iter().zip(g.data()) {
        let want = EPS * translab::diffcore::sign(*gv);
        assert!((dv - want).abs() < 1e-12, "{dv} vs {want}");
    }
}

#[test]
fn constant_gradient_rgi_momentum_is_t_prime_g() {
    let g = dyadic_gradient(2);
    let o = ConstOracle { grad: g.clone() };
    let mut cfg = AttackConfig::new(Method::Mifgsm);
    cfg.normalize = false;
    let spec = RgiSpec { restarts: 4, pre_iters: 6, init: RandomInit::Uniform };
    let m0 = rgi_initialize(&o, &mid_gray(), 0, &cfg, &spec, 9).unwrap();
    assert!(bit_equal(&m0, &g.scale(6.0)));
}

#[test]
fn increasing_dual_steps_grow_linearly() {
    let o = ConstOracle { grad: Tensor::full(&[1, 16, 16], 0.75) };
    let mut cfg = AttackConfig::new(Method::Ifgsm);
    cfg.iters = 4;
    let dual = DualSpec {
        count: 1,
        schedule: ScheduleSpec::new(ScheduleKind::Linear).increasing(),
        project: true,
        init: RandomInit::Zero,
    };
    let cfg = AttackConfig { dual: Some(dual), ..cfg };
    let mut steps = Vec::new();
    let mut last = 0.0;
    run_attack_observed(&cfg, &o, &mid_gray(), 0, 0, &mut |stage, d| {
        if stage == Stage::Main {
            let v = d.data()[0].abs();
            steps.push(v - last);
            last = v;
        }
    })
    .unwrap();
    for (s, want) in steps.iter().zip([0.1, 0.2, 0.3, 0.4]) {
        assert!((s - want * EPS).abs() < 1e-15, "{steps:?}");
    }
}

#[test]
fn dual_example_attack_is_the_dual_config() {
    let models = untrained_models();
    let (xs, ys) = glyphs(2, 8);
    let o = ModelOracle::new(&models[1]);
    let spec = DualSpec { count: 2, ..Default::default() };
    let cfg = AttackConfig::new(Method::Mifgsm);
    let a = dual_example_attack(&o, &xs[0], ys[0], &cfg, &spec, 4).unwrap();
    let b = run_attack(&AttackConfig { dual: Some(spec), ..cfg }, &o, &xs[0], ys[0], 4).unwrap();
    assert!(bit_equal(&a, &b));
}

fn cases() -> (Vec<translab::modelzoo::Model>, Vec<Tensor>, Vec<usize>) {
    let (xs, ys) = glyphs(3, 11);
    (untrained_models(), xs, ys)
}

#[test]
fn mi_without_decay_is_ifgsm() {
    let (m, x, y) = cases();
    degeneracy::mi_without_decay((&m, &x, &y)).unwrap();
}

#[test]
fn single_zero_restart_is_gi() {
    let (m, x, y) = cases();
    degeneracy::rgi_single_zero_start((&m, &x, &y)).unwrap();
}

#[test]
fn single_dual_under_constant_gradient_is_scheduled_ifgsm() {
    let (_, x, _) = cases();
    let grads: Vec<Tensor> = (0..x.len()).map(|i| dyadic_gradient(20 + i as u64)).collect();
    degeneracy::single_dual_constant_gradient(&x, &grads).unwrap();
}

#[test]
fn pvalue_zero_is_identity() {
    let (m, x, y) = cases();
    degeneracy::pvalue_zero((&m, &x, &y)).unwrap();
}

#[test]
fn fgsm_is_one_step_ifgsm() {
    let (m, x, y) = cases();
    degeneracy::fgsm_single_step((&m, &x, &y)).unwrap();
}

#[test]
fn rgi_matches_scripted_replay() {
    let models = untrained_models();
    let (xs, ys) = glyphs(2, 12);
    let mut cfg = AttackConfig::new(Method::Mifgsm);
    cfg.normalize = false;
    cfg.rgi = Some(RgiSpec { restarts: 3, pre_iters: 4, init: RandomInit::Uniform });
    for (i, m) in models.iter().enumerate() {
        let o = ModelOracle::new(m);
        let seed = 50 + i as u64;
        let lib = run_attack(&cfg, &o, &xs[i % 2], ys[i % 2], seed).unwrap();
        assert!(bit_equal(&lib, &replay::rgi(m, &xs[i % 2], ys[i % 2], EPS, 10, 4, 3, 1.0, seed)));
    }
}

#[test]
fn dual_matches_scripted_replay() {
    let models = untrained_models();
    let (xs, ys) = glyphs(2, 13);
    let mut cfg = AttackConfig::new(Method::Mifgsm);
    cfg.normalize = false;
    cfg.dual = Some(DualSpec {
        count: 2,
        schedule: ScheduleSpec::new(ScheduleKind::Linear).increasing(),
        project: false,
        init: RandomInit::Uniform,
    });
    for (i, m) in models.iter().enumerate() {
        let o = ModelOracle::new(m);
        let seed = 70 + i as u64;
        let lib = run_attack(&cfg, &o, &xs[i % 2], ys[i % 2], seed).unwrap();
        assert!(bit_equal(&lib, &replay::dual(m, &xs[i % 2], ys[i % 2], EPS, 10, 2, 1.0, seed)));
    }
}

#[test]
fn gradient_alignment_matches_scripted_replay() {
    use translab::ensemble::{ConflictRule, EnsembleSpec, FusionMode, LateralOracle};
    let models = untrained_models();
    let members: Vec<_> = models.iter().collect();
    let (xs, ys) = glyphs(2, 14);
    let spec = EnsembleSpec { ga_enabled: true, conflict: ConflictRule::Sign, ..EnsembleSpec::new(FusionMode::Loss) };
    let o = LateralOracle::new(members.clone(), spec, EPS).unwrap();
    for (x, &y) in xs.iter().zip(&ys) {
        let lib = run_attack(&AttackConfig::new(Method::Ifgsm), &o, x, y, 0).unwrap();
        assert!(bit_equal(&lib, &replay::ga(&members, x, y, EPS, 10)));
    }
}

fn any_schedule() -> impl Strategy<Value = ScheduleSpec> {
    (0usize..5, 0.0f64..3.0).prop_map(|(k, p)| ScheduleSpec { p, ..ScheduleSpec::new(ScheduleKind::ALL[k]) })
}

proptest! {
    #[test]
    fn schedules_are_normalised_and_monotone(spec in any_schedule(), t in 1usize..60) {
        let w = make_schedule(&spec, t).unwrap();
        prop_assert_eq!(w.len(), t);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(w.iter().all(|&v| v >= 0.0));
        prop_assert!(w.windows(2).all(|p| p[0] >= p[1]));
        let mut inc = make_schedule(&ScheduleSpec { direction: Direction::Increasing, ..spec }, t).unwrap();
        inc.reverse();
        prop_assert!(inc.iter().zip(&w).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
