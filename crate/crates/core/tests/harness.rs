mod common;

use std::sync::OnceLock;

use translab::attacks::{AttackConfig, Method};
use translab::diffcore::Tensor;
use translab::harness::config::ExperimentConfig;
use translab::harness::{
    csv_string, eval_split, generate_dataset, run_experiment, success_rate, sweep, train_members, Dataset,
    DatasetParams, Experiment, NamedModel, ResultTable, SweepAxis, ZooMember,
};
use translab::modelzoo::{ArchId, TrainConfig};
use translab::par::Execution;

struct Small {
    ds: Dataset,
    models: Vec<NamedModel>,
}

fn small() -> &'static Small {
    static S: OnceLock<Small> = OnceLock::new();
    S.get_or_init(|| {
        let ds = generate_dataset(&DatasetParams { n: 600, seed: 5, ..Default::default() }).unwrap();
        let members = [
            ZooMember::new("cnn_a", ArchId::CnnA, 1),
            ZooMember::new("mlp2", ArchId::Mlp2, 2),
            ZooMember::new("cnn_pool", ArchId::CnnPool, 3),
        ];
        let cfg = TrainConfig { epochs: 4, ..Default::default() };
        let models = train_members(&ds, &members, &cfg, Execution::Parallel).unwrap().into_iter().map(|(m, _)| m).collect();
        Small { ds, models }
    })
}

fn experiment(s: &Small, method: Method) -> Experiment<'_> {
    let mut exp = Experiment::new(&s.models[0], s.models[1..].iter().collect(), AttackConfig::new(method));
    exp.n_eval = 40;
    exp.seed = 3;
    exp
}

#[test]
fn repeated_runs_write_identical_csv() {
    let s = small();
    let mut exp = experiment(s, Method::Vmifgsm);
    exp.transform = translab::transforms::TransformSpec::new(translab::transforms::TransformKind::Dim).with_copies(2);
    let a = csv_string(&[run_experiment(&exp, &s.ds).unwrap()]).unwrap();
    let b = csv_string(&[run_experiment(&exp, &s.ds).unwrap()]).unwrap();
    assert_eq!(a, b);
    exp.exec = Execution::Sequential;
    let c = csv_string(&[run_experiment(&exp, &s.ds).unwrap()]).unwrap();
    assert_eq!(a, c);
}

#[test]
fn surrogate_as_victim_reproduces_whitebox() {
    let s = small();
    let exp = Experiment::new(&s.models[0], vec![&s.models[0], &s.models[1]], AttackConfig::new(Method::Ifgsm));
    let exp = Experiment { n_eval: 40, ..exp };
    let r = run_experiment(&exp, &s.ds).unwrap();
    assert_eq!(r.victims[0].transfer_asr, r.whitebox_asr);
}

#[test]
fn success_rate_edges() {
    let s = small();
    let (_, xs, ys) = eval_split(&s.ds, 30).unwrap();
    let zero: Vec<Tensor> = xs.iter().map(|x| Tensor::zeros(x.shape())).collect();
    assert_eq!(success_rate(&s.models[0].model, &xs, &ys, &zero, Execution::Sequential).unwrap(), 0.0);
}

#[test]
fn single_value_sweep_is_one_run_with_axis_columns() {
    let s = small();
    let exp = experiment(s, Method::Mifgsm);
    let one = run_experiment(&exp, &s.ds).unwrap();
    let sw = sweep(&exp, &s.ds, SweepAxis::Decay, &[1.0], &[]).unwrap();
    assert_eq!(sw.len(), 1);
    assert_eq!(sw[0].victims, one.victims);
    assert_eq!(sw[0].whitebox_asr, one.whitebox_asr);
    assert_eq!(sw[0].axis, Some(("decay".to_string(), 1.0)));
}

#[test]
fn decay_grid_has_eleven_rows_per_victim_and_method() {
    let s = small();
    let mut exp = experiment(s, Method::Mifgsm);
    exp.n_eval = 8;
    exp.attack.iters = 3;
    let values: Vec<f64> = (0..=10).map(|i| i as f64 * 0.2).collect();
    let methods = [Method::Mifgsm, Method::Nifgsm];
    let reports = sweep(&exp, &s.ds, SweepAxis::Decay, &values, &methods).unwrap();
    let table = ResultTable::read(csv_string(&reports).unwrap().as_bytes()).unwrap();
    let victims = exp.victims.len();
    for m in methods {
        let rows = table.rows.iter().filter(|r| r[1] == m.to_string() && r[6] != "mean").count();
        assert_eq!(rows, 11 * victims);
    }
}

#[test]
fn config_file_drives_an_experiment() {
    let s = small();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.ini");
    std::fs::write(
        &path,
        "[attack]\nmethod = nifgsm\neps = 8/255\niters = 5\n\n[transform]\nkind = sim\ncopies = 3\n\n[data]\nn_eval = 12\nseed = 4\n",
    )
    .unwrap();
    let cfg = ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg.attack.method, Method::Nifgsm);
    assert_eq!(cfg.attack.eps, 8.0 / 255.0);
    let mut exp = experiment(s, Method::Ifgsm);
    exp.attack = cfg.attack;
    exp.transform = cfg.transform;
    exp.n_eval = cfg.n_eval;
    exp.seed = cfg.seed;
    let r = run_experiment(&exp, &s.ds).unwrap();
    assert_eq!(r.n_eval, 12);
    assert_eq!(r.tricks, "simx3");
}
