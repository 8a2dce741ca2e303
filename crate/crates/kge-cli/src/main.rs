//! `kge` — train and evaluate knowledge graph embeddings.
//!
//! Subcommands: `train`, `eval`, `partition`, `serve`. Every flag has a
//! default; values can also come from a `key = value` config file via
//! `--config`, with command-line flags taking precedence.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Errors carry the exit code the contract of each command demands:
/// 2 for usage/validation problems, 3 for bind failures, 1 otherwise.
pub struct CmdError {
    pub code: u8,
    pub source: anyhow::Error,
}

impl CmdError {
    pub fn usage(err: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 2,
            source: err.into(),
        }
    }

    pub fn bind(err: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 3,
            source: err.into(),
        }
    }

    pub fn runtime(err: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 1,
            source: err.into(),
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for CmdError {
    fn from(e: E) -> Self {
        CmdError::runtime(e)
    }
}

pub type CmdResult = Result<(), CmdError>;

#[derive(Parser)]
#[command(name = "kge", version, about = "Knowledge graph embedding training engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train embeddings on a dataset directory (train/valid/test.txt).
    Train(commands::train::TrainArgs),
    /// Evaluate a checkpoint with link prediction.
    Eval(commands::eval::EvalArgs),
    /// Partition a graph's entities and report the edge cut.
    Partition(commands::partition::PartitionArgs),
    /// Serve embedding tables over the push/pull wire protocol.
    Serve(commands::serve::ServeArgs),
}

/// Shared flag: optional config file merged under the CLI values.
#[derive(clap::Args, Debug, Clone)]
pub struct ConfigArg {
    /// Config file with `key = value` lines (keys = long flag names).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<config::ConfigFile, CmdError> {
        match &self.config {
            Some(path) => config::ConfigFile::load(path).map_err(CmdError::usage),
            None => Ok(config::ConfigFile::default()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Partition(args) => commands::partition::run(args),
        Command::Serve(args) => commands::serve::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.source);
            ExitCode::from(e.code)
        }
    }
}
