use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the engine, the reference solver or the file layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("point cloud has {available} points but {requested} neighbors were requested")]
    Sizing { available: usize, requested: usize },

    #[error("duplicate points {first} and {second} (separation {separation:e})")]
    DuplicatePoint {
        first: usize,
        second: usize,
        separation: f64,
    },

    #[error("non-finite coordinate at point {0}")]
    NonFinitePoint(usize),

    #[error("degenerate stencil geometry at point {index} ({target:?}): {reason}")]
    DegenerateGeometry {
        index: usize,
        target: [f64; 2],
        reason: String,
    },

    #[error("fluid element {id} left the domain at t = {time} (position {position:?})")]
    DomainExit { id: u64, time: f64, position: [f64; 2] },

    #[error("numerical failure at t = {time}: {detail}")]
    NumericalFailure { time: f64, detail: String },

    #[error("lineage error: {0}")]
    Lineage(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("grid resolution error: {0}")]
    Resolution(String),

    #[error("malformed file {path}: line {line}: {detail}")]
    Format { path: PathBuf, line: usize, detail: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::ConfigParse(_) | Error::Sizing { .. } => 2,
            // Input files that do not fit together are reported like
            // malformed ones.
            Error::Io { .. } | Error::Format { .. } | Error::Alignment(_) => 4,
            _ => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
