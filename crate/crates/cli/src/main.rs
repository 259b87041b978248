//! `prescore` — run a verification or measurement experiment from a TOML
//! config and write `results.csv` plus `summary.json`.
//!
//! Exit codes: 0 when every threshold check passes, 2 when the run completed
//! but a check failed, 1 on configuration or runtime errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use prescore_cli::config::{Experiment, ExperimentConfig};
use prescore_cli::{run_experiment, write_reports};

#[derive(Parser)]
#[command(
    name = "prescore",
    about = "Experiment runner for pre-scored approximate attention",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment config file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for results.csv and summary.json; defaults to the
    /// config's output_path, then the current directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for grid points (ignored by `speed`, which always
    /// times single-threaded).
    #[arg(long)]
    threads: Option<usize>,
    /// Replace the config's seed list, e.g. --seed-override 1,2,3
    #[arg(long, value_delimiter = ',')]
    seed_override: Option<Vec<u64>>,
}

#[derive(Subcommand)]
enum Command {
    /// Verify leverage-score separation between signal and noise rows.
    LeverageSeparation(RunArgs),
    /// Verify k-means recovery of the planted partition and centroid
    /// concentration.
    ClusterRecovery(RunArgs),
    /// Verify the singleton regime: one cluster per signal row.
    SingletonRecovery(RunArgs),
    /// Verify Minkowski k-means recovery across exponents.
    LpRecovery(RunArgs),
    /// Regression on the high-norm construction defeating unnormalized
    /// clustering.
    NormSensitivity(RunArgs),
    /// Measure heavy-entry coverage of key selections vs random baselines.
    Coverage(RunArgs),
    /// Measure runtime scaling of exact vs pre-scored attention.
    Speed(RunArgs),
    /// Measure approximation error against the exact oracle.
    ApproxError(RunArgs),
}

impl Command {
    fn experiment(&self) -> Experiment {
        match self {
            Command::LeverageSeparation(_) => Experiment::LeverageSeparation,
            Command::ClusterRecovery(_) => Experiment::ClusterRecovery,
            Command::SingletonRecovery(_) => Experiment::SingletonRecovery,
            Command::LpRecovery(_) => Experiment::LpRecovery,
            Command::NormSensitivity(_) => Experiment::NormSensitivity,
            Command::Coverage(_) => Experiment::Coverage,
            Command::Speed(_) => Experiment::Speed,
            Command::ApproxError(_) => Experiment::ApproxError,
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::LeverageSeparation(a)
            | Command::ClusterRecovery(a)
            | Command::SingletonRecovery(a)
            | Command::LpRecovery(a)
            | Command::NormSensitivity(a)
            | Command::Coverage(a)
            | Command::Speed(a)
            | Command::ApproxError(a) => a,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: &Command) -> anyhow::Result<bool> {
    let args = command.args();
    let mut cfg = ExperimentConfig::load(&args.config)?;
    let expected = command.experiment();
    if cfg.experiment != expected {
        anyhow::bail!(
            "field `experiment`: config says `{}` but the `{}` subcommand was invoked",
            cfg.experiment.name(),
            expected.name()
        );
    }
    if let Some(seeds) = args.seed_override.clone() {
        cfg.override_seeds(seeds)?;
    }
    let threads = args
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));

    let run = run_experiment(&cfg, threads)?;

    let out_dir = args
        .out
        .clone()
        .or_else(|| cfg.output_path.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let (csv_path, json_path) = write_reports(&out_dir, &run)?;

    if let Some(checks) = run.summary.get("checks") {
        print_checks("", checks);
    }
    println!(
        "{}: {} rows, {} -> {}, {}",
        run.experiment,
        run.csv_rows.len(),
        csv_path.display(),
        json_path.display(),
        if run.pass { "PASS" } else { "FAIL" }
    );
    Ok(run.pass)
}

fn print_checks(prefix: &str, value: &serde_json::Value) {
    if let Some(map) = value.as_object() {
        if let Some(pass) = map.get("pass").and_then(|p| p.as_bool()) {
            let detail = map
                .get("value")
                .map(|v| format!(" value={v}"))
                .unwrap_or_default();
            println!(
                "  [{}] {prefix}{detail}",
                if pass { "PASS" } else { "FAIL" }
            );
        } else {
            for (k, v) in map {
                let nested = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}/{k}")
                };
                print_checks(&nested, v);
            }
        }
    }
}
