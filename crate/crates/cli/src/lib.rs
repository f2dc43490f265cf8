//! Batch experiment driver for the `indiff` engine: configuration files,
//! the `price`, `figure`, `hedge`, `converge`, `dual` and `check`
//! subcommands, and their CSV output.
//!
//! Exit codes: 0 success, 1 validation or invariant failure, 2 numeric
//! failure (an overflow guard or a non-finite matrix function).

pub mod commands;
pub mod config;
pub mod csv;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{cmd_check, cmd_converge, cmd_dual, cmd_figure, cmd_hedge, cmd_price};
pub use config::{ConfigError, ExperimentConfig, DEFAULT_CONFIG};
pub use csv::{format_sig, CsvTable};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] indiff::Error),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numeric() => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// u^A, its gradient and the heat-equation residual at evaluation points
    Price,
    /// Limiting indifference price over the A grid
    Figure,
    /// Monte Carlo diagnostics of the tracking hedge
    Hedge,
    /// Certainty equivalents along the Λ list against their limit
    Converge,
    /// Dual lower bounds for the configured specs
    Dual,
    /// Invariant suite; exits with 1 if any item fails
    Check,
}

#[derive(Debug, Parser)]
#[command(name = "indiff", version, about = "Indifference pricing under linear price impact")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Configuration file; the built-in one-asset ATM call setup when omitted
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// CSV destination; overrides output.csv, stdout when neither is set
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides numerics.seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides numerics.n_paths
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    /// Only errors on stderr
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Worker threads; all cores when omitted
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

/// Loads the configuration named on the command line and applies the flag overrides.
pub fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
        None => DEFAULT_CONFIG.to_string(),
    };
    let mut config = ExperimentConfig::parse(&text)?;
    if let Some(seed) = cli.seed {
        config.numerics.seed = seed;
    }
    if let Some(paths) = cli.paths {
        config.numerics.n_paths = paths;
    }
    if let Some(out) = &cli.out {
        config.output.csv = Some(out.display().to_string());
    }
    // re-validate after overrides
    Ok(ExperimentConfig::parse(&config.emit())?)
}

/// Runs one subcommand; the flag is false when `check` found a failing item.
pub fn run_command(command: Command, config: &ExperimentConfig) -> Result<(CsvTable, bool), CliError> {
    match command {
        Command::Price => cmd_price(config).map(|t| (t, true)),
        Command::Figure => cmd_figure(config).map(|t| (t, true)),
        Command::Hedge => cmd_hedge(config).map(|t| (t, true)),
        Command::Converge => cmd_converge(config).map(|t| (t, true)),
        Command::Dual => cmd_dual(config).map(|t| (t, true)),
        Command::Check => cmd_check(config),
    }
}

/// Full CLI flow; returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let result = (|| -> Result<bool, CliError> {
        let config = load_config(cli)?;
        let (table, ok) = match cli.threads {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Invalid(e.to_string()))?
                .install(|| run_command(cli.command, &config))?,
            None => run_command(cli.command, &config)?,
        };
        let text = table.render();
        match &config.output.csv {
            Some(path) => {
                std::fs::write(path, &text).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
                if !cli.quiet {
                    eprintln!("wrote {} rows to {path}", table.rows().len());
                }
            }
            None => print!("{text}"),
        }
        if !ok {
            eprintln!("check: one or more invariants failed");
        }
        Ok(ok)
    })();
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
