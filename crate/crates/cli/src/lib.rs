//! Command-line front end: configuration, subcommands and artifact export.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod gradcheck;

use std::path::Path;

use thiserror::Error;
use trust_core::simharness::SimError;

pub use artifacts::{export_artifacts, load_log, save_log};
pub use config::{load_config, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}")]
    Check(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Parse(_) => "parse",
            CliError::Invalid(_) => "config",
            CliError::Sim(_) => "sim",
            CliError::Check(_) => "check",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Invalid(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Sim(_) => 4,
            CliError::Check(_) => 5,
        }
    }

    /// `error kind=<kind>: <message>` on a single line.
    pub fn one_line(&self) -> String {
        let msg = self.to_string().split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error kind={}: {msg}", self.kind())
    }
}
