use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{value_parser, Arg, ArgAction, ArgMatches, Command};

use translab::harness::config::{ExperimentConfig, KEYS};
use translab::harness::{
    default_zoo, generate_dataset, load_dataset, run_experiment, save_dataset, sweep, train_members, write_csv,
    AttackReport, DatasetParams, Experiment, NamedModel, ResultTable, ZooMember,
};
use translab::modelzoo::{load_weights, save_weights, ArchId, TrainConfig};
use translab::par::{init_workers_from_env, Execution};
use translab::{Error, Result};

fn key_args(cmd: Command) -> Command {
    let mut cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .short('c')
            .value_parser(value_parser!(PathBuf))
            .help("experiment config file"),
    );
    for (section, key, help) in KEYS {
        let mut arg = Arg::new(*key).long(*key).value_name("VALUE").help(format!("[{section}] {help}"));
        if key.contains('_') {
            arg = arg.alias(key.replace('_', "-"));
        }
        cmd = cmd.arg(arg);
    }
    cmd
}

fn cli() -> Command {
    Command::new("translab")
        .about("Transfer-based adversarial attack toolkit")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(
            Command::new("gen-data")
                .about("render the synthetic glyph dataset")
                .arg(Arg::new("out").long("out").short('o').required(true).value_parser(value_parser!(PathBuf)))
                .arg(Arg::new("n").long("n").value_parser(value_parser!(usize)))
                .arg(Arg::new("height").long("height").value_parser(value_parser!(usize)))
                .arg(Arg::new("width").long("width").value_parser(value_parser!(usize)))
                .arg(Arg::new("channels").long("channels").value_parser(value_parser!(usize)))
                .arg(Arg::new("classes").long("classes").value_parser(value_parser!(usize)))
                .arg(Arg::new("seed").long("seed").value_parser(value_parser!(u32)))
                .arg(Arg::new("noise").long("noise").value_parser(value_parser!(f64))),
        )
        .subcommand(
            Command::new("train")
                .about("train one model, or the default zoo with --zoo")
                .arg(Arg::new("dataset").long("dataset").short('d').required(true).value_parser(value_parser!(PathBuf)))
                .arg(Arg::new("arch").long("arch").help("mlp2|cnn_a|cnn_b|cnn_pool"))
                .arg(Arg::new("seed").long("seed").value_parser(value_parser!(u64)).default_value("0"))
                .arg(Arg::new("out").long("out").short('o').value_parser(value_parser!(PathBuf)))
                .arg(
                    Arg::new("zoo")
                        .long("zoo")
                        .value_parser(value_parser!(PathBuf))
                        .conflicts_with_all(["arch", "out"])
                        .help("directory receiving <name>.talw for every default zoo member"),
                )
                .arg(Arg::new("epochs").long("epochs").value_parser(value_parser!(usize)))
                .arg(Arg::new("lr").long("lr").value_parser(value_parser!(f64)))
                .arg(Arg::new("batch_size").long("batch_size").alias("batch-size").value_parser(value_parser!(usize))),
        )
        .subcommand(key_args(Command::new("attack").about("run one experiment and write its CSV rows")))
        .subcommand(key_args(Command::new("sweep").about("run one experiment per sweep value")))
        .subcommand(
            Command::new("report")
                .about("render result CSVs as text tables or gnuplot columns")
                .arg(Arg::new("csv").required(true).num_args(1..).value_parser(value_parser!(PathBuf)))
                .arg(Arg::new("columns").long("columns").help("comma-separated columns to show"))
                .arg(Arg::new("all").long("all").action(ArgAction::SetTrue).help("include per-victim rows"))
                .arg(Arg::new("gnuplot").long("gnuplot").action(ArgAction::SetTrue)),
        )
}

fn main() -> ExitCode {
    init_workers_from_env();
    let matches = cli().get_matches();
    let res = match matches.subcommand() {
        Some(("gen-data", m)) => gen_data(m),
        Some(("train", m)) => train(m),
        Some(("attack", m)) => attack(m, false),
        Some(("sweep", m)) => attack(m, true),
        Some(("report", m)) => report(m),
        _ => unreachable!("subcommand required"),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("translab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn gen_data(m: &ArgMatches) -> Result<()> {
    let mut p = DatasetParams::default();
    let get = |k: &str| m.get_one::<usize>(k).copied();
    p.n = get("n").unwrap_or(p.n);
    p.height = get("height").unwrap_or(p.height);
    p.width = get("width").unwrap_or(p.width);
    p.channels = get("channels").unwrap_or(p.channels);
    p.classes = get("classes").unwrap_or(p.classes);
    p.seed = m.get_one::<u32>("seed").copied().unwrap_or(p.seed);
    p.noise = m.get_one::<f64>("noise").copied().unwrap_or(p.noise);
    let ds = generate_dataset(&p)?;
    save_dataset(&ds, m.get_one::<PathBuf>("out").unwrap())?;
    eprintln!("wrote {} images ({}x{}x{}, {} classes)", ds.len(), ds.height, ds.width, ds.channels, ds.classes);
    Ok(())
}

fn train(m: &ArgMatches) -> Result<()> {
    let ds = load_dataset(m.get_one::<PathBuf>("dataset").unwrap())?;
    let mut cfg = TrainConfig::default();
    cfg.epochs = m.get_one::<usize>("epochs").copied().unwrap_or(cfg.epochs);
    cfg.lr = m.get_one::<f64>("lr").copied().unwrap_or(cfg.lr);
    cfg.batch_size = m.get_one::<usize>("batch_size").copied().unwrap_or(cfg.batch_size);
    let (members, dir) = if let Some(dir) = m.get_one::<PathBuf>("zoo") {
        std::fs::create_dir_all(dir)?;
        (default_zoo().members(), dir.clone())
    } else {
        let arch: ArchId = m.get_one::<String>("arch").ok_or_else(|| Error::config("--arch or --zoo is required"))?.parse()?;
        let out = m.get_one::<PathBuf>("out").ok_or_else(|| Error::config("--out is required with --arch"))?;
        let seed = *m.get_one::<u64>("seed").unwrap();
        let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
        let dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
        (vec![ZooMember::new(&stem, arch, seed)], dir)
    };
    for (named, rep) in train_members(&ds, &members, &cfg, Execution::Parallel)? {
        let path = dir.join(format!("{}.talw", named.name));
        save_weights(&named.model, &path)?;
        eprintln!(
            "{}: train {:.4} holdout {:.4} -> {}",
            named.name,
            rep.train_accuracy,
            rep.holdout_accuracy,
            path.display()
        );
    }
    Ok(())
}

fn load_named(path: &Path) -> Result<NamedModel> {
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    Ok(NamedModel::new(name, load_weights(path)?))
}

fn assignments(m: &ArgMatches) -> Result<Vec<(String, String)>> {
    let mut pairs = match m.get_one::<PathBuf>("config") {
        Some(p) => ExperimentConfig::parse_file_text(&std::fs::read_to_string(p)?)?,
        None => Vec::new(),
    };
    for (_, key, _) in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            pairs.push((key.to_string(), v.clone()));
        }
    }
    Ok(pairs)
}

fn attack(m: &ArgMatches, is_sweep: bool) -> Result<()> {
    let cfg = ExperimentConfig::from_assignments(&assignments(m)?)?;
    let ds = load_dataset(cfg.dataset.as_ref().ok_or_else(|| Error::config("dataset is required"))?)?;
    if cfg.surrogates.is_empty() || cfg.victims.is_empty() {
        return Err(Error::config("surrogates and victims are required"));
    }
    let surrogates = cfg.surrogates.iter().map(|p| load_named(p)).collect::<Result<Vec<_>>>()?;
    let victims = cfg.victims.iter().map(|p| load_named(p)).collect::<Result<Vec<_>>>()?;
    let mut exp = Experiment::new(&surrogates[0], victims.iter().collect(), cfg.attack);
    exp.surrogates = surrogates.iter().collect();
    exp.transform = cfg.transform;
    exp.ensemble = cfg.ensemble.clone();
    exp.n_eval = cfg.n_eval;
    exp.seed = cfg.seed;
    exp.run_id = cfg.run_id.clone();
    exp.timing = cfg.timing;
    let reports: Vec<AttackReport> = if is_sweep {
        let axis = cfg.sweep_axis.ok_or_else(|| Error::config("sweep_axis is required"))?;
        sweep(&exp, &ds, axis, &cfg.sweep_values, &cfg.sweep_methods)?
    } else {
        vec![run_experiment(&exp, &ds)?]
    };
    for r in &reports {
        eprintln!(
            "{} {} [{}]: whitebox {:.4} mean transfer {:.4}",
            r.run_id, r.method, r.tricks, r.whitebox_asr, r.mean_transfer_asr
        );
    }
    match &cfg.csv {
        Some(p) => write_csv(&reports, BufWriter::new(File::create(p)?)),
        None => write_csv(&reports, io::stdout().lock()),
    }
}

fn report(m: &ArgMatches) -> Result<()> {
    let cols: Vec<String> = match m.get_one::<String>("columns") {
        Some(c) => c.split(',').map(|s| s.trim().to_string()).collect(),
        None => ["run_id", "method", "tricks", "axis_value", "victim", "whitebox_asr", "transfer_asr"]
            .map(String::from)
            .to_vec(),
    };
    let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut out = io::stdout().lock();
    for path in m.get_many::<PathBuf>("csv").unwrap() {
        let mut t = ResultTable::read(File::open(path)?)?;
        let text = if m.get_flag("gnuplot") {
            t.render_gnuplot()?
        } else {
            if !m.get_flag("all") {
                t = t.means();
            }
            t.render_text(&cols)?
        };
        write!(out, "{text}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_is_well_formed() {
        cli().debug_assert();
    }
}
