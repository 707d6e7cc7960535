//! Command-line entry point.
//!
//! Exit codes: 0 on success, 2 when inputs fail validation (bad config,
//! malformed or missing files, schema violations), 3 when a run fails at
//! compute time (divergence, enumeration blow-up, I/O while writing).

mod commands;
mod config;

use clap::{Parser, Subcommand, ValueEnum};
use commands::DataSource;
use config::{Overrides, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ridgearb",
    version,
    about = "Robust statistical arbitrage detection with ridgelet strategies"
)]
struct Cli {
    /// JSON run configuration; flags below override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed overriding the config (stage seeds re-derive from it).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts and manifests.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Force bit-reproducible gradient reduction.
    #[arg(long, global = true)]
    deterministic_reduce: bool,
    /// Activation family for the per-date networks.
    #[arg(long, global = true, value_enum)]
    activation: Option<ActivationFlag>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ActivationFlag {
    Relu,
    Silu,
    Gelu,
    Mish,
    Tanh,
    Hybrid,
}

impl ActivationFlag {
    fn as_str(self) -> &'static str {
        match self {
            ActivationFlag::Relu => "relu",
            ActivationFlag::Silu => "silu",
            ActivationFlag::Gelu => "gelu",
            ActivationFlag::Mish => "mish",
            ActivationFlag::Tanh => "tanh",
            ActivationFlag::Hybrid => "hybrid",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Load a price CSV and cache an ambiguity set of scenario paths.
    Ingest {
        /// Historical prices: date column plus one column per ticker.
        #[arg(long, value_name = "PATH")]
        csv: PathBuf,
    },
    /// Train a strategy and write a checkpoint plus objective trace.
    Train {
        /// Scenario cache produced by `ingest`.
        #[arg(long, value_name = "PATH", conflicts_with = "fixture")]
        scenarios: Option<PathBuf>,
        /// Self-contained tiny-market fixture.
        #[arg(long, value_name = "PATH")]
        fixture: Option<PathBuf>,
    },
    /// Evaluate the penalized objective and report an arbitrage verdict.
    Detect {
        #[arg(long, value_name = "PATH", conflicts_with = "fixture")]
        scenarios: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        fixture: Option<PathBuf>,
        /// Reuse a trained strategy instead of training in-process.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Roll a trained strategy over held-out prices and score it.
    Backtest {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// Held-out price CSV in the same format as `ingest`.
        #[arg(long, value_name = "PATH")]
        csv: PathBuf,
    },
    /// Brute-force a tiny market and compare training against it.
    Oracle {
        #[arg(long, value_name = "PATH")]
        fixture: PathBuf,
    },
    /// Consolidate run artifacts into summary tables.
    Report {
        /// Directory holding the artifacts; defaults to the output dir.
        #[arg(long, value_name = "DIR")]
        run_dir: Option<PathBuf>,
    },
}

/// Failures classified by exit code.
pub enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

/// Marks which phase a fallible step belongs to.
pub trait Phase<T> {
    /// Input loading or schema validation: exit code 2 on failure.
    fn invalid(self) -> Result<T, Failure>;
    /// Computation or artifact writing: exit code 3 on failure.
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Phase<T> for Result<T, E> {
    fn invalid(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Validation(e.into()))
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out,
        deterministic_reduce: cli.deterministic_reduce,
        activation: cli.activation.map(|a| a.as_str().to_string()),
    };
    let config = RunConfig::resolve(cli.config.as_deref(), &overrides).invalid()?;
    if let Some(workers) = config.workers {
        // A pool may already exist when invoked repeatedly in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }

    match cli.command {
        Command::Ingest { csv } => commands::cmd_ingest(&config, &csv),
        Command::Train { scenarios, fixture } => {
            commands::cmd_train(&config, &data_source(scenarios, fixture)?)
        }
        Command::Detect { scenarios, fixture, checkpoint } => {
            commands::cmd_detect(&config, &data_source(scenarios, fixture)?, checkpoint.as_deref())
        }
        Command::Backtest { checkpoint, csv } => commands::cmd_backtest(&config, &checkpoint, &csv),
        Command::Oracle { fixture } => commands::cmd_oracle(&config, &fixture),
        Command::Report { run_dir } => commands::cmd_report(&config, run_dir.as_deref()),
    }
}

fn data_source(scenarios: Option<PathBuf>, fixture: Option<PathBuf>) -> Result<DataSource, Failure> {
    match (scenarios, fixture) {
        (Some(path), None) => Ok(DataSource::Scenarios(path)),
        (None, Some(path)) => Ok(DataSource::Fixture(path)),
        _ => Err(Failure::Validation(anyhow::anyhow!(
            "exactly one of --scenarios or --fixture is required"
        ))),
    }
}
