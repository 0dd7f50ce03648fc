//! `dobsim` — command-line front end for the disturbance observer
//! simulator: run scenarios, sweep parameters, compare controller variants,
//! and run the numerical self-checks.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::Overrides;
use dobsim::sim::PlantModel;

#[derive(Parser)]
#[command(
    name = "dobsim",
    version,
    about = "Disturbance observer simulation for a second-order servo system"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlantModelArg {
    /// Integrate the continuous true plant between samples.
    ContinuousTruth,
    /// Drive the held-disturbance discrete model directly.
    PureDiscrete,
}

impl From<PlantModelArg> for PlantModel {
    fn from(arg: PlantModelArg) -> Self {
        match arg {
            PlantModelArg::ContinuousTruth => PlantModel::ContinuousTruth,
            PlantModelArg::PureDiscrete => PlantModel::PureDiscrete,
        }
    }
}

#[derive(Args)]
struct CommonRunArgs {
    /// Scenario configuration file (TOML); baseline defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the noise seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the plant-advance mode from the configuration.
    #[arg(long, value_enum)]
    plant_model: Option<PlantModelArg>,
}

impl CommonRunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            plant_model: self.plant_model.map(Into::into),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario; write trace.csv and metrics.json.
    Run {
        #[command(flatten)]
        common: CommonRunArgs,
    },
    /// Run one scenario per parameter value; write sweep.csv and per-value
    /// traces.
    Sweep {
        #[command(flatten)]
        common: CommonRunArgs,
        /// Parameter path to vary: g, g_p, g_o, kp, kd, ts, duration,
        /// substeps, seed.
        #[arg(long)]
        param: String,
        /// Comma-separated list of values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Run several configurations on a shared time grid; write
    /// comparison.csv and ranking.json.
    Compare {
        /// Configuration files (at least two).
        #[arg(num_args = 2.., required = true)]
        configs: Vec<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the numerical self-checks and report residuals.
    Validate,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { common } => {
            commands::cmd_run(common.config.as_deref(), &common.out, common.overrides())
        }
        Command::Sweep {
            common,
            param,
            values,
        } => commands::cmd_sweep(
            common.config.as_deref(),
            &param,
            &values,
            &common.out,
            common.overrides(),
        ),
        Command::Compare { configs, out } => commands::cmd_compare(&configs, &out),
        Command::Validate => {
            return match commands::cmd_validate() {
                Ok(true) => ExitCode::SUCCESS,
                Ok(false) => ExitCode::FAILURE,
                Err(err) => {
                    eprintln!("error: {err:#}");
                    ExitCode::FAILURE
                }
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
