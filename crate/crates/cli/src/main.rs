mod commands;
mod plots;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Unsteady channel flow past an obstacle with a random viscosity field.
#[derive(Parser, Debug)]
#[command(name = "sgns", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Deterministic run with the mean viscosity.
    RunDet(RunArgs),
    /// Stochastic Galerkin run on the schedule of a deterministic run.
    RunSg(RunArgs),
    /// Monte Carlo ensemble of adaptive deterministic runs.
    RunMc(RunArgs),
    /// Sparse-grid collocation on the Galerkin schedule.
    RunSc(RunArgs),
    /// Compares the sg, sc and mc results found under the output directory.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// JSON configuration; omitted keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Random seed (overrides `seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for ensembles (overrides `threads`).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct ReportArgs {
    /// Directory holding the `sg`, `sc` and `mc` result folders.
    #[arg(long)]
    pub out: PathBuf,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::RunDet(a) => commands::run(commands::Mode::Det, &a),
        Command::RunSg(a) => commands::run(commands::Mode::Sg, &a),
        Command::RunMc(a) => commands::run(commands::Mode::Mc, &a),
        Command::RunSc(a) => commands::run(commands::Mode::Sc, &a),
        Command::Report(a) => commands::report(&a),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
