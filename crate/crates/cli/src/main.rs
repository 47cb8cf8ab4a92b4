use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod svg;

/// Grey-box plant models: simulation, identification and validation.
#[derive(Debug, Parser)]
#[command(name = "greybox", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitKind {
    Map1,
    Map2,
    Map3,
    Step,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write simlog.csv and summary.json.
    Simulate {
        #[arg(long)]
        plant: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a quadratic map or a first-order step response to samples.
    Fit {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long, value_enum)]
        kind: FitKind,
        #[arg(long)]
        out: PathBuf,
        /// Minimise absolute instead of relative residuals.
        #[arg(long)]
        plain: bool,
        /// Size of the input step for `--kind step`.
        #[arg(long, default_value_t = 1.0)]
        step_input: f64,
    },
    /// Compare measured channels with a simulation log.
    Validate {
        #[arg(long)]
        measured: PathBuf,
        #[arg(long)]
        simlog: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        channels: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Centred moving average over this many 60 s samples before comparing.
        #[arg(long, default_value_t = 1)]
        rolling: usize,
    },
    /// Draw simulated (dashed) and measured (solid) channels as SVG.
    Plot {
        #[arg(long)]
        simlog: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        channels: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        measured: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GREYBOX_LOG_LEVEL", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { plant, scenario, out } => commands::simulate(&plant, &scenario, &out),
        Command::Fit { samples, kind, out, plain, step_input } => {
            commands::fit(&samples, kind, &out, !plain, step_input)
        }
        Command::Validate { measured, simlog, channels, out, rolling } => {
            commands::validate(&measured, &simlog, &channels, &out, rolling)
        }
        Command::Plot { simlog, channels, out, measured } => {
            commands::plot(&simlog, &channels, &out, measured.as_deref())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
