//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Schema file is inconsistent, or a CSV header does not match it.
    #[error("schema error: {0}")]
    Schema(String),

    /// A single cell could not be parsed or violates its column contract.
    #[error("cell error at row {row}, column {column}: {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },

    /// A whole row is unusable (e.g. missing anchor date or label).
    #[error("row error at row {row}: {message}")]
    Row { row: usize, message: String },

    /// Invalid configuration or parameter combination.
    #[error("config error: {0}")]
    Config(String),

    /// Numeric domain violation (e.g. non-positive height for BMI).
    #[error("domain error: {0}")]
    Domain(String),

    /// A statistic or metric is undefined on the given input.
    #[error("undefined: {0}")]
    Undefined(String),

    /// A pipeline stage failed; carries the stage name for diagnostics.
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wrap an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &str) -> Error {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
