//! `pho`: dataset generation, training, simulation, sweeps and plots.

mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pho_core::{ConfigError, StrategyKind};
use tracing_subscriber::EnvFilter;

#[derive(Parser, Debug)]
#[command(name = "pho", version, about = "Proactive handover simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Scenario file (TOML); built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a labelled time-to-blockage dataset as CSV.
    GenerateDataset {
        #[command(flatten)]
        common: Common,
        /// Number of rows; defaults to `train.samples`.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value = "out/dataset.csv")]
        out: PathBuf,
    },
    /// Train the regression network and report test R².
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "out/dataset.csv")]
        dataset: PathBuf,
        /// Model file; defaults to `paths.model`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-epoch loss CSV; defaults to `history.csv` next to the model.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Run one scenario and write trace.csv, events.jsonl and summary.json.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        run: RunArgs,
    },
    /// One run per value along an axis, plus a combined table.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        run: RunArgs,
        /// speed (mph), trigger_offset (m) or blockage_loss (dB).
        #[arg(long)]
        axis: String,
        /// Comma separated, e.g. `--values=-10,-5,0`.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
    },
    /// Render SVG plots from a simulation output directory.
    Plot {
        /// Directory holding trace.csv and events.jsonl.
        bundle: PathBuf,
        /// Where to write the SVGs; defaults to the bundle directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// proactive, reactive or none; overrides `strategy.kind`.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Output directory; defaults to `paths.out_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Model file for the `model` predictor; defaults to `paths.model`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Also write the emulated detector frames.
    #[arg(long)]
    pub frames: bool,
}

impl RunArgs {
    pub fn strategy(&self) -> Result<Option<StrategyKind>, CliError> {
        self.strategy
            .as_deref()
            .map(|s| {
                StrategyKind::parse(s)
                    .ok_or_else(|| CliError::Usage(format!("unknown strategy `{s}`")))
            })
            .transpose()
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(ConfigError),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<pho_core::EngineError> for CliError {
    fn from(e: pho_core::EngineError) -> Self {
        match e {
            pho_core::EngineError::Config(c) => CliError::Config(c),
            other => CliError::runtime(other),
        }
    }
}

fn main() -> ExitCode {
    let filter = EnvFilter::try_from_env("PHO_LOG").unwrap_or_else(|_| EnvFilter::new("warn"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    let result = match cli.cmd {
        Command::GenerateDataset { common, n, out } => commands::generate_dataset(&common, n, &out),
        Command::Train {
            common,
            dataset,
            out,
            history,
        } => commands::train(&common, &dataset, out, history),
        Command::Simulate { common, run } => commands::simulate(&common, &run),
        Command::Sweep {
            common,
            run,
            axis,
            values,
        } => commands::sweep(&common, &run, &axis, &values),
        Command::Plot { bundle, out } => {
            plot::plot_bundle(&bundle, out.as_deref().unwrap_or(&bundle))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
