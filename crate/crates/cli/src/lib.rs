//! Command-line front end for `hidden-events-core`.
//!
//! Every subcommand reads a TOML config, writes its outputs to one
//! directory and stamps each file with the config hash and seed. Exit codes:
//! 0 success, 1 I/O, 2 config, 3 data, 4 non-convergence.

use std::path::{Path, PathBuf};

use thiserror::Error;

pub mod commands;
pub mod config;
pub mod io;
pub mod report;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    /// Outputs were written, but the fit did not converge.
    #[error("fit did not converge: {0}")]
    NotConverged(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::NotConverged(_) => 4,
        }
    }
}
