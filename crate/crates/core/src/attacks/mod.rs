//! Iterative gradient attacks and the gradient-side tricks: random global
//! momentum initialisation, scheduled step sizes and dual examples.

mod config;
mod engine;
mod oracle;
mod schedule;

pub use config::{AttackConfig, DualSpec, Method, MethodParams, RandomInit, RgiSpec};
pub use engine::{
    dual_example_attack, gi_warmup, normalize_mean_abs, rgi_initialize, run_attack, run_attack_observed, run_sequence_observed,
    PerturbationState, Stage,
};
pub use oracle::{derive_seed, stream_rng, streams, uniform_start, GradientOracle, ModelOracle};
pub use schedule::{make_schedule, Direction, ScheduleKind, ScheduleSpec};
