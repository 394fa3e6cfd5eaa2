//! `physdyn`: simulate objects, generate datasets, train the trajectory
//! diffusion model, sample from it, evaluate and estimate parameters.

mod commands;
mod config;
mod ply;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Version tag carried by every JSON document the CLI writes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("simulation failed: {0}")]
    Simulation(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Simulation(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<physdyn_core::Error> for CliError {
    fn from(e: physdyn_core::Error) -> Self {
        use physdyn_core::Error as E;
        match e {
            e if e.is_simulation_failure() => CliError::Simulation(e.to_string()),
            e @ (E::Io(_) | E::Format(_) | E::Json(_)) => CliError::Io(e.to_string()),
            e => CliError::Config(e.to_string()),
        }
    }
}

impl From<physdyn_model::Error> for CliError {
    fn from(e: physdyn_model::Error) -> Self {
        use physdyn_model::Error as E;
        match e {
            E::Core(c) => c.into(),
            e @ (E::Io(_) | E::Checkpoint(_)) => CliError::Io(e.to_string()),
            e @ (E::NonFinite(_) | E::NonFiniteLoss { .. }) => CliError::Simulation(e.to_string()),
            e => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "physdyn", version, about = "Physics-conditioned point trajectory simulation and generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dotted-key override such as `dataset.sim.grid_res=32` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one object and write its trajectory.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write one ASCII PLY file per frame.
        #[arg(long)]
        export_ply: bool,
    },
    /// Generate a dataset of simulated animations.
    GenDataset {
        #[command(flatten)]
        common: Common,
    },
    /// Train the denoiser on a generated dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Overrides `train.steps`.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Sample a trajectory from a trained checkpoint.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        export_ply: bool,
    },
    /// Compare a predicted trajectory with ground truth.
    Eval {
        #[command(flatten)]
        common: Common,
    },
    /// Recover physical parameters of an observed trajectory.
    Estimate {
        #[command(flatten)]
        common: Common,
    },
}

fn init_threads() {
    if let Ok(v) = std::env::var("PHYSDYN_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                physdyn_core::par::init_global(n);
            }
            _ => log::warn!("ignoring PHYSDYN_THREADS={v:?}"),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    init_threads();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { common, export_ply } => commands::simulate(&common, export_ply),
        Command::GenDataset { common } => commands::gen_dataset(&common),
        Command::Train { common, steps } => commands::train(&common, steps),
        Command::Sample { common, export_ply } => commands::sample(&common, export_ply),
        Command::Eval { common } => commands::eval(&common),
        Command::Estimate { common } => commands::estimate(&common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("physdyn: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
