use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;

use config::{Overrides, RunConfig};
use error::CliError;

/// Generate growth curves, estimate derivatives and detect jolts.
#[derive(Debug, Parser)]
#[command(name = "joltlab", version, about)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores). Never changes results.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Monte Carlo trials per class.
    #[arg(long, global = true, value_name = "N")]
    trials: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic series with a sidecar recording spec, seed and label.
    Generate,
    /// Run the jolt detector on a `t,value` CSV.
    Detect { input: PathBuf },
    /// Write derivative estimates and jolt metrics for a `t,value` CSV.
    Metrics { input: PathBuf },
    /// TPR/FPR at each noise level for the configured detector.
    Mc,
    /// Monte Carlo over a grid of detector settings.
    Sweep,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out,
        jobs: cli.jobs,
        trials: cli.trials,
    };
    let config = RunConfig::load(cli.config.as_deref(), &overrides)?;
    match &cli.command {
        Command::Generate => commands::cmd_generate(&config),
        Command::Detect { input } => commands::cmd_detect(&config, input),
        Command::Metrics { input } => commands::cmd_metrics(&config, input),
        Command::Mc => commands::cmd_mc(&config),
        Command::Sweep => commands::cmd_sweep(&config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
