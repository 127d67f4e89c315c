//! Crate-wide error type.

use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor shapes do not satisfy an operation's preconditions.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Invalid argument or configuration value; the message names the field.
    #[error("validation error: {0}")]
    Validation(String),

    /// A store file failed to load or violated a store invariant.
    #[error("ingest error: {0}")]
    Ingest(String),

    /// Episode construction could not satisfy the task spec.
    #[error("episode error: {0}")]
    Episode(String),

    /// A class stratum filter matched nothing.
    #[error("empty stratum: {0}")]
    EmptyStratum(String),

    /// Group ranking requested on empty statistics.
    #[error("ranking error: {0}")]
    Ranking(String),

    /// Training aborted on a non-finite objective.
    #[error("non-finite loss at iteration {iteration}; group means: {group_means:?}")]
    NonFinite {
        iteration: u64,
        group_means: BTreeMap<String, f64>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 validation, 3 numeric, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite { .. } => 3,
            Error::Io(_) => 4,
            _ => 2,
        }
    }
}
