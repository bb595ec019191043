//! Datasets, the model zoo recipe, experiments, sweeps and reporting.

pub mod config;
pub mod dataset;
pub mod experiment;
pub mod metrics;
pub mod report;
pub mod sweep;
pub mod zoo;

pub use config::{adjustment_preset, ExperimentConfig};
pub use dataset::{generate_dataset, load_dataset, save_dataset, Dataset, DatasetParams};
pub use experiment::{
    admix_pool, craft_perturbations, csv_string, eval_split, run_experiment, write_csv, AttackReport, Experiment,
    VictimResult, CSV_HEADER, HOLDOUT_EVERY,
};
pub use metrics::{clean_accuracy, evaluate_outcomes, predict, rate_of, success_rate, Outcome};
pub use report::ResultTable;
pub use sweep::{apply_axis, sweep, SweepAxis};
pub use zoo::{default_zoo, train_members, NamedModel, ZooMember, ZooRecipe};
