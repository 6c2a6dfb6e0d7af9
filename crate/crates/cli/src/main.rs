//! `autopark`: train, evaluate and inspect learned parking-lot controllers.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "autopark", version, about = "Train and evaluate learned vehicle controllers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand that reads a run configuration.
#[derive(Args, Clone, Debug)]
pub struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for rollouts and evaluation.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory (or file, for single-file exports).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the PPO epoch loop and write logs and checkpoints.
    Train {
        #[command(flatten)]
        common: Common,
        /// Overrides the maximum number of epochs.
        #[arg(long)]
        epochs: Option<usize>,
        /// Continue from a checkpoint written into the same output directory.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate policies on seeded tasks and write a report.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Policy checkpoints to compare, as `path` or `name=path`.
        #[arg(long = "checkpoint")]
        checkpoints: Vec<String>,
        /// Combined controller from a DRIVER and a STOPPER checkpoint.
        #[arg(long, num_args = 2, value_names = ["DRIVER", "STOPPER"])]
        controller: Option<Vec<PathBuf>>,
        /// Number of tasks (defaults to the configured count).
        #[arg(long)]
        tasks: Option<usize>,
        /// Write per-step traces and scenario files for the first N tasks.
        #[arg(long, default_value_t = 0)]
        traces: usize,
    },
    /// Convert a trace and its scenario into plot data (JSON).
    Replay {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Export the perception grid and attention map at a scenario's start.
    Attention {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Generate seeded scenarios and write them as JSON.
    GenScenarios {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tasks: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { common, epochs, resume } => commands::train(&common, epochs, resume.as_deref()),
        Command::Evaluate { common, checkpoints, controller, tasks, traces } => {
            commands::evaluate(&common, &checkpoints, controller.as_deref(), tasks, traces)
        }
        Command::Replay { common, trace, scenario } => commands::replay(&common, &trace, &scenario),
        Command::Attention { common, checkpoint, scenario } => commands::attention(&common, &checkpoint, &scenario),
        Command::GenScenarios { common, tasks } => commands::gen_scenarios(&common, tasks),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
