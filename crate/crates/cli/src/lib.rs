//! Command-line driver: cross-validation, training, prediction, ensembles,
//! drug-vector export and plots.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod svg;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

/// Failure of a command, mapped onto the process exit code.
#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CliError {
    /// Bad configuration or arguments; exit code 2.
    #[error("{0}")]
    Validation(String),
    /// Failure while reading data, training or writing; exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            Self::Runtime(_) => 1,
        }
    }
}

impl From<synergy_core::Error> for CliError {
    fn from(e: synergy_core::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "synergy", version, about = "Drug-pair synergy regression toolkit")]
pub struct Cli {
    /// Run configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for folds and trees; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Leave-drug-combinations-out cross-validation.
    Cv,
    /// Fit on every instance and save the model.
    Train,
    /// Predict the configured instances with a saved model.
    Predict {
        /// Model file written by `train`.
        #[arg(long)]
        model: PathBuf,
    },
    /// Greedy weighted ensemble of base-learner predictions.
    Ensemble,
    /// Export learned drug vectors of a graph model.
    Embed {
        /// Graph model file written by `train`.
        #[arg(long)]
        model: PathBuf,
    },
    /// Plot targets against estimates for sampled rows.
    Report {
        /// `row_id,prediction` CSV.
        #[arg(long)]
        predictions: PathBuf,
        /// `row_id,target` CSV.
        #[arg(long)]
        targets: PathBuf,
        /// Number of rows to sample.
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value = "Targets and estimates")]
        title: String,
    },
    /// Check a configuration and its input paths.
    Validate,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(message) => {
            if !message.is_empty() {
                println!("{message}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command, returning the text to print on success.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    match cli.threads {
        Some(0) => Err(CliError::Validation("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(format!("cannot start thread pool: {e}")))?
            .install(|| commands::dispatch(cli)),
        None => commands::dispatch(cli),
    }
}
