//! Command-line experiment runner.
//!
//! A run reads one JSON [`ExperimentConfig`], dispatches to the named command,
//! and writes `report.json`, `traces/*.csv` and `plotdata/*.csv` into the
//! output directory.

mod config;
mod run;

use std::path::PathBuf;

use clap::Parser;
use thiserror::Error;

pub use config::{Command, ExperimentConfig, Roles, Settings, CONFIG_VERSION};
pub use run::{emit_plot_data, run, RunOptions, RunReport, REPORT_FILE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error("invalid config field `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },
    #[error("io failure: {0}")]
    IoFailure(String),
    #[error("{0}")]
    Module(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigInvalid { .. } => 2,
            CliError::IoFailure(_) => 3,
            CliError::Module(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::IoFailure(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "stopped-walk",
    version,
    about = "Tail scales, moment indices and determinacy of stopped random walks"
)]
pub struct Args {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replicate count; overrides the config.
    #[arg(long)]
    pub replicates: Option<u64>,
    /// Suppress the summary on stdout.
    #[arg(long)]
    pub quiet: bool,
    /// Also write raw stopped-sum samples to `samples.bin`.
    #[arg(long)]
    pub dump_samples: bool,
}

/// Loads the config with command-line overrides applied.
pub fn load_config(args: &Args) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::IoFailure(format!("{}: {e}", args.config.display())))?;
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::ConfigInvalid {
        field: "config".into(),
        reason: e.to_string(),
    })?;
    if let Some(obj) = value.as_object_mut() {
        if let Some(seed) = args.seed {
            obj.insert("master_seed".into(), seed.into());
        }
        if let Some(r) = args.replicates {
            obj.insert("replicates".into(), r.into());
        }
        if let Some(out) = &args.output {
            obj.insert("output_dir".into(), out.display().to_string().into());
        }
    }
    ExperimentConfig::from_json(&value.to_string())
}

/// Runs the command line and returns the process exit code.
pub fn main_with(args: Args) -> i32 {
    let result = load_config(&args).and_then(|cfg| {
        run(
            &cfg,
            &RunOptions {
                dump_samples: args.dump_samples,
            },
        )
    });
    match result {
        Ok(report) => {
            if !args.quiet {
                println!("{}", report.summary());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
