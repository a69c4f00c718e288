//! `kgfield` experiment driver.

mod config;
mod run;

use std::fs::{self, File};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info, LevelFilter};
use serde::Serialize;
use simplelog::{ColorChoice, CombinedLogger, TermLogger, TerminalMode, WriteLogger};

use config::{parse_config, Experiment, ExperimentConfig, Overrides};
use run::Status;

#[derive(Parser)]
#[command(name = "kgfield", version, about = "Klein-Gordon field coupled to a harmonic particle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the coupling conditions and report K, K0 and their eigenvalues.
    CheckModel(Common),
    /// Evolve deterministic initial data and record the trajectory.
    Simulate(Common),
    /// Evolve and fit the decay of the local energy norm.
    EnergyDecay(Common),
    /// Time-domain resolvent kernel N(t) by inverse Laplace transform.
    Resolvent(Common),
    /// Compare the surface-integral Im H(ix+0) with limiting absorption.
    Plemelj(Common),
    /// Monte Carlo ensemble against the exact covariance transport.
    Equilibrium(Common),
    /// Scattering profiles, residuals and the limit quadratic form.
    Scattering(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the file).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed (overrides the file).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to RAYON_NUM_THREADS or the machine's parallelism.
    #[arg(long)]
    threads: Option<usize>,
}

impl Command {
    fn split(self) -> (Experiment, Common) {
        match self {
            Command::CheckModel(c) => (Experiment::CheckModel, c),
            Command::Simulate(c) => (Experiment::Simulate, c),
            Command::EnergyDecay(c) => (Experiment::EnergyDecay, c),
            Command::Resolvent(c) => (Experiment::Resolvent, c),
            Command::Plemelj(c) => (Experiment::Plemelj, c),
            Command::Equilibrium(c) => (Experiment::Equilibrium, c),
            Command::Scattering(c) => (Experiment::Scattering, c),
        }
    }
}

#[derive(Serialize)]
struct Metadata<'a> {
    library: String,
    config_path: &'a PathBuf,
    threads: usize,
    seeds: Vec<u64>,
    config: &'a ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    exit_code: Option<u8>,
}

fn write_metadata(cfg: &ExperimentConfig, path: &PathBuf, exit_code: Option<u8>) -> anyhow::Result<()> {
    let meta = Metadata {
        library: format!("kgfield {}", env!("CARGO_PKG_VERSION")),
        config_path: path,
        threads: rayon::current_num_threads(),
        seeds: cfg.seed.into_iter().collect(),
        config: cfg,
        exit_code,
    };
    serde_json::to_writer_pretty(File::create(cfg.out.join("metadata.json"))?, &meta)?;
    Ok(())
}

fn init_logging(dir: &PathBuf) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    let cfg = simplelog::Config::default();
    CombinedLogger::init(vec![
        TermLogger::new(LevelFilter::Info, cfg.clone(), TerminalMode::Stderr, ColorChoice::Never),
        WriteLogger::new(LevelFilter::Info, cfg, File::create(dir.join("run.log"))?),
    ])?;
    Ok(())
}

fn main() -> ExitCode {
    let (experiment, args) = Cli::parse().command.split();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("cannot set up {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    let overrides = Overrides {
        experiment: Some(experiment),
        out: args.out.clone(),
        seed: args.seed,
    };
    let cfg = match parse_config(&args.config, &overrides) {
        Ok(c) => c,
        Err(e) => {
            if let Some(out) = &args.out {
                if init_logging(out).is_ok() {
                    error!("{e}");
                    return ExitCode::from(1);
                }
            }
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = init_logging(&cfg.out) {
        eprintln!("cannot open the run log in {}: {e}", cfg.out.display());
        return ExitCode::from(1);
    }
    info!("{} -> {}", experiment.name(), cfg.out.display());
    let code = match write_metadata(&cfg, &args.config, None).and_then(|_| run::run(&cfg)) {
        Ok(Status::Done) => 0,
        Ok(Status::ConditionsFailed) => 2,
        Err(e) => {
            error!("{e:#}");
            1
        }
    };
    if let Err(e) = write_metadata(&cfg, &args.config, Some(code)) {
        error!("cannot update metadata: {e:#}");
    }
    info!("exit code {code}");
    ExitCode::from(code)
}
