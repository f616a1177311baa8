use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix dimension {0} exceeds the supported maximum {max}", max = crate::matcore::MAX_DIM)]
    Size(usize),

    #[error("matrix is not Hermitian (max |m - m^dagger| = {0:e})")]
    NotHermitian(f64),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("arity mismatch: {0}")]
    Arity(String),

    #[error("enumeration budget exceeded: {0}")]
    Budget(String),

    #[error("state is local (maximal game value {0} <= 1); critical visibility undefined")]
    Local(f64),

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("inconsistent result: {0}")]
    Inconsistent(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
