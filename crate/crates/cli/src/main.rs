//! `bdkf`: runs the block-diagonal Kalman filter studies and solvers and
//! writes their CSV/JSON artifacts.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Job;
use crate::config::{Overrides, RunFile, SimulateConfig, SteadyConfig};
use crate::error::CliError;
use crate::output::OutDir;

#[derive(Parser)]
#[command(name = "bdkf", version, about = "Block-diagonal Kalman filter studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run file; a `.run.json` sidecar from an earlier run works too.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel studies (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    horizon: Option<usize>,
    #[arg(long, global = true)]
    seeds: Option<usize>,
    /// Steady-state iteration tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Simulate a coupled system and write its trajectory.
    Simulate,
    /// Distance of the block-diagonal steady state from the uncoupled and full ones, over β and n.
    Decouple,
    /// Speckle-drift tracking with the full, block-diagonal and banded EKFs.
    Speckle,
    /// Per-step timing against n.
    Bench,
    /// Steady-state covariances and perturbation bounds for one system.
    Steady,
}

impl Command {
    fn tag(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Decouple => "decouple",
            Command::Speckle => "speckle",
            Command::Bench => "bench",
            Command::Steady => "steady",
        }
    }
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    let tag = cli.command.tag();
    let (file, base) = match &cli.config {
        Some(p) => (RunFile::load(p)?, p.parent().map(PathBuf::from).unwrap_or_default()),
        None => (RunFile::default(), PathBuf::new()),
    };
    if let Some(c) = &file.command {
        if c != tag {
            return Err(CliError::Config(format!("config file is for `{c}`, not `{tag}`")));
        }
    }
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let o = Overrides { beta: cli.beta, n: cli.n, horizon: cli.horizon, seeds: cli.seeds, tol: cli.tol };
    let job = Job { seed: cli.seed.or(file.seed).unwrap_or(0), out: OutDir::create(&cli.out)? };
    match cli.command {
        Command::Simulate => commands::simulate_cmd(&job, &SimulateConfig::from_parts(file.config, &base, &o)?),
        Command::Decouple => commands::decouple_cmd(&job, file.config, &o),
        Command::Speckle => commands::speckle_cmd(&job, file.config, &o),
        Command::Bench => commands::bench_cmd(&job, file.config, &o),
        Command::Steady => commands::steady_cmd(&job, &SteadyConfig::from_parts(file.config, &base, &o)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let tag = cli.command.tag();
    match run(cli) {
        Ok(path) => {
            eprintln!("{tag}: wrote {}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("bdkf {tag}: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
