use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the simulator, controller, and harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {field} {constraint} (got {value})")]
    Config {
        field: String,
        constraint: String,
        value: String,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    Numeric(&'static str),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Training { epoch: usize, loss: f64 },

    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("run failed for strategy {strategy} seed {seed}: {source}")]
    Run {
        strategy: String,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error in {what}: {message}")]
    Parse { what: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(
        field: impl Into<String>,
        constraint: impl Into<String>,
        value: impl std::fmt::Display,
    ) -> Self {
        Error::Config {
            field: field.into(),
            constraint: constraint.into(),
            value: value.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: impl Into<String>, message: impl std::fmt::Display) -> Self {
        Error::Parse {
            what: what.into(),
            message: message.to_string(),
        }
    }

    /// Short machine-readable tag used by the CLI error line.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Config { .. } => "config",
            Error::Dimension { .. } => "dimension",
            Error::Numeric(_) => "numeric",
            Error::Input(_) => "input",
            Error::Training { .. } => "training",
            Error::UnknownNode(_) => "lookup",
            Error::Run { .. } => "run",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
        }
    }
}
