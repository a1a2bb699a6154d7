use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod report;

use commands::CliError;

#[derive(Parser)]
#[command(
    name = "sde-smallnoise",
    version,
    about = "Small-noise expansions of SDEs with Brownian and jump noise"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the expansion coefficients u_0..u_K and write coefficients.csv.
    Expand(RunArgs),
    /// Measure remainder scaling along an eps ladder; writes remainder.csv and summary.csv.
    Remainder(RunArgs),
    /// Compare against exact oracles; writes oracle.csv and exits 5 on a tolerance breach.
    Oracle(RunArgs),
}

/// Flags override the values of the config's `run` section.
#[derive(Args, Clone, Debug, Default)]
pub struct RunArgs {
    /// JSON model configuration.
    #[arg(long, required_unless_present = "preset")]
    pub config: Option<PathBuf>,
    /// Use a built-in preset instead of (or underneath) a config file.
    #[arg(long)]
    pub preset: Option<String>,
    /// Highest expansion order.
    #[arg(long)]
    pub k: Option<usize>,
    /// Time horizon.
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    /// Number of time steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Decreasing eps ladder, e.g. `--eps 0.2 0.1 0.05` or `--eps 0.2,0.1`.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Master seed; replicate r uses a seed derived from (seed, r).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Expand(args) => commands::expand(args),
        Command::Remainder(args) => commands::remainder(args),
        Command::Oracle(args) => commands::oracle(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Derivative(_) => 3,
            CliError::Paths(_) => 4,
            CliError::Tolerance(_) => 5,
            CliError::Failed(_) | CliError::Io { .. } => 1,
        }
    }
}
