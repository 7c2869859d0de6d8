use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("nothing to solve: the task pool is empty")]
    NothingToSolve,

    #[error("search space of {cardinality} states exceeds the enumeration limit of {limit}")]
    OracleRefused { cardinality: u128, limit: u128 },

    #[error("improvement rate is undefined for an initial best reward of {0}")]
    UndefinedRate(f64),

    #[error("failed to parse {path}: line {line}, column {column}, field `{field}`: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        field: String,
        message: String,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
