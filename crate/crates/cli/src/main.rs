//! `costa`: run, sweep and validate stochastic constrained problems from a
//! TOML experiment file.
//!
//! Exit codes: 0 on success, 1 when a run or validation fails, 2 when the
//! configuration cannot be loaded or the problem cannot be built.

mod commands;
mod config;
mod demo;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Failure;
use crate::config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "costa", version, about = "Stochastic successive convex approximation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write its trace and summary.
    Run(Common),
    /// Run every (method, T, seed) cell of the [sweep] section.
    Sweep(Common),
    /// Check surrogate and parameter conditions without running.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides COSTA_OUTPUT_DIR and the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Replace the configured seed (and the sweep seed list).
    #[arg(long)]
    seed_override: Option<u64>,
}

fn load(c: &Common) -> Result<(ExperimentConfig, PathBuf), Failure> {
    let mut cfg = ExperimentConfig::load(&c.config).map_err(Failure::Config)?;
    if let Some(seed) = c.seed_override {
        cfg.seed = seed;
        if let Some(s) = cfg.sweep.as_mut() {
            s.seeds = vec![seed];
        }
    }
    let out = commands::output_dir(c.out.clone(), &cfg);
    Ok((cfg, out))
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(c) => {
            let (cfg, out) = load(&c)?;
            commands::run_single(&cfg, &out)
        }
        Command::Sweep(c) => {
            let (cfg, out) = load(&c)?;
            commands::sweep(&cfg, &out, c.workers)
        }
        Command::Validate(c) => {
            let (cfg, out) = load(&c)?;
            commands::validate(&cfg, &out)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
    }
}
