use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller-supplied data violates an operation's preconditions.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Arguments disagree in shape or length.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file contents. `field` names the offending entry when known.
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("sample {sample}, step {step}: {source}")]
    Simulation {
        sample: usize,
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Innermost error, skipping simulation (sample, step) annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Simulation { source, .. } => source.root(),
            other => other,
        }
    }
}
