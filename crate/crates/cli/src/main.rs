use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fieldlab::config::{ExperimentConfig, ExperimentKind, OutputFormat};
use fieldlab::runner::{run_experiment, write_outputs};
use fieldlab::self_test::run_self_test;
use fieldlab::Error;

#[derive(Parser)]
#[command(name = "fieldlab", version, about = "Stationary random fields on Z^2: exact series and Monte Carlo")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample normalized partial sums over the configured windows.
    SimulateField(RunArgs),
    /// Coboundary decomposition, norms and growth curves.
    Decompose(RunArgs),
    /// Monte Carlo evidence for the limit conditions on a dyadic grid.
    CheckConditions(RunArgs),
    /// The tower counterexample: exceedance, degeneracy grid and schedule.
    Counterexample(RunArgs),
    /// Closed-form tables and the self-test results.
    Report(RunArgs),
    /// Exact checks only; exits nonzero if any fails.
    SelfTest,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; without it the defaults are used and `--seed` is required.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the config's `output_dir`, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Caps the worker thread count.
    #[arg(long)]
    threads: Option<usize>,
    /// Comma-separated subset of csv,json,svg.
    #[arg(long, value_delimiter = ',')]
    format: Option<Vec<OutputFormat>>,
}

fn load_config(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let kind_name = |k: ExperimentKind| serde_json::to_string(&k).expect("serializes");
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            ExperimentConfig::from_json(&text)?
        }
        None => {
            let seed = args.seed.ok_or_else(|| Error::ConfigInvalid {
                path: "seed".into(),
                message: "no config given; pass --seed".into(),
            })?;
            ExperimentConfig::from_json(&format!(r#"{{"experiment": {}, "seed": {seed}}}"#, kind_name(kind)))?
        }
    };
    if cfg.experiment != kind {
        return Err(Error::ConfigInvalid {
            path: "experiment".into(),
            message: format!("config is for {} but the subcommand is {}", kind_name(cfg.experiment), kind_name(kind)),
        });
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(formats) = &args.format {
        let mut f = formats.clone();
        f.sort();
        f.dedup();
        cfg.formats = f;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(kind: ExperimentKind, args: &RunArgs) -> Result<(), Error> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    }
    let cfg = load_config(kind, args)?;
    let dir = match &args.out {
        Some(d) => d.clone(),
        None => PathBuf::from(cfg.output_dir.clone().unwrap_or_else(|| "out".into())),
    };
    let result = run_experiment(&cfg)?;
    let written = write_outputs(&result, &dir)?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn self_test() -> ExitCode {
    let rows = run_self_test();
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in &rows {
        println!("{:<width$}  {}  {}", r.name, if r.passed { "PASS" } else { "FAIL" }, r.detail);
    }
    if rows.iter().all(|r| r.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::SimulateField(a) => (ExperimentKind::SimulateField, a),
        Command::Decompose(a) => (ExperimentKind::Decompose, a),
        Command::CheckConditions(a) => (ExperimentKind::CheckConditions, a),
        Command::Counterexample(a) => (ExperimentKind::Counterexample, a),
        Command::Report(a) => (ExperimentKind::Report, a),
        Command::SelfTest => return self_test(),
    };
    match run(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::ConfigInvalid { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
