//! `sbvm`: experiment runner for Gaussian-surrogate inference.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand as ClapSubcommand};

use crate::commands::Subcommand;
use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "sbvm",
    version,
    about = "Gaussian-surrogate Bernstein-von Mises experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment configuration; defaults apply to missing keys.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Dotted-path override, e.g. `--set model.theta0=40`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Overrides `sampling.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `output.directory`; the directory must exist.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Debug, ClapSubcommand)]
enum Command {
    /// Legendre coefficients a_{j,k} and covariance tables b_{k,l}, c_{k,l}.
    Coeffs,
    /// Simulate one observation batch.
    Simulate,
    /// Grid posterior, Gaussian limit and L1 distance for one batch.
    Posterior,
    /// Replicated posteriors over the configured batch sizes.
    BvmSweep,
    /// True Fisher information and V over a θ0 grid.
    FisherSweep,
}

impl Command {
    fn subcommand(&self) -> Subcommand {
        match self {
            Self::Coeffs => Subcommand::Coeffs,
            Self::Simulate => Subcommand::Simulate,
            Self::Posterior => Subcommand::Posterior,
            Self::BvmSweep => Subcommand::BvmSweep,
            Self::FisherSweep => Subcommand::FisherSweep,
        }
    }
}

fn run(cli: &Cli) -> Result<Vec<String>, CliError> {
    let cfg = ExperimentConfig::resolve(
        cli.config.as_deref(),
        &cli.set,
        cli.seed,
        cli.out.as_deref(),
    )?;
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    }
    commands::run(cli.command.subcommand(), &cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{f}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("sbvm: {e}");
            e.exit_code()
        }
    }
}
