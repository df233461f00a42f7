use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Process exit code for bad configuration or malformed input.
pub const EXIT_INPUT: i32 = 2;
/// Process exit code for a numeric failure such as non-convergence.
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{}: {message}", path.display())]
    File { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] cfe_core::Error),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn parse(path: &Path, line: u64, message: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    pub fn file(path: &Path, message: impl Into<String>) -> Self {
        CliError::File {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use cfe_core::Error as E;
        match self {
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::Core(
                E::NoFinitePeak
                | E::TooFewPoints { .. }
                | E::DegenerateDesign
                | E::NoResidualDof
                | E::EmptySamples,
            ) => EXIT_NUMERIC,
            _ => EXIT_INPUT,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
