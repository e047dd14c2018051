use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("moment generating function diverges at z = {z} for {dist}")]
    Domain { dist: String, z: f64 },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("potential overflow: alpha * max|y| = {exponent} exceeds {limit}")]
    Overflow { exponent: f64, limit: f64 },

    #[error("graph too large for exact conductance: n = {n} > {max}")]
    TooLarge { n: usize, max: usize },

    #[error("graph generation failed after {attempts} attempts: {reason}")]
    GenerationFailure { attempts: usize, reason: String },

    #[error("traces do not share a shape: {0}")]
    MismatchedTraces(String),

    #[error("parse error in {source_name} at line {line}, column {column}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::PreconditionViolated(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
