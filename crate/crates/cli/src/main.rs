//! Batch experiment front-end for the regression Monte Carlo solver.

mod commands;
mod config;
mod output;

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "solve",
    version,
    about = "Price the withdrawal-benefit contract and run solver experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML configuration; omitted keys use the default contract and solver.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override solver.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override solver.repeats.
    #[arg(long)]
    repeats: Option<usize>,
    /// Worker threads (default: logical CPU count).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory for the artifact files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured engine and summarize the value estimate.
    Price(CommonArgs),
    /// Fit shape-preserving and raw regressions side by side.
    CompareRegression(CommonArgs),
    /// Histogram the post-action samples of each simulation scheme.
    CompareSimulation(CommonArgs),
    /// Track the estimate spread as the path count grows.
    ConvergenceSweep(CommonArgs),
    /// Compare the engine against the grid dynamic-programming reference.
    OracleCheck(CommonArgs),
}

fn load(args: &CommonArgs) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.solver.seed = seed;
    }
    if let Some(repeats) = args.repeats {
        config.solver.repeats = repeats;
    }
    config.validate()?;
    if let Some(workers) = args.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(config)
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Price(args) => commands::price(&load(args)?, &args.out),
        Command::CompareRegression(args) => commands::compare_regression(&load(args)?, &args.out),
        Command::CompareSimulation(args) => commands::compare_simulation(&load(args)?, &args.out),
        Command::ConvergenceSweep(args) => commands::convergence_sweep(&load(args)?, &args.out),
        Command::OracleCheck(args) => commands::oracle_check(&load(args)?, &args.out),
    }
}
