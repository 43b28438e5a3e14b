//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by the auditing pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (architecture mismatch, bad hyperparameters, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Invalid runtime input (shape mismatch, empty set, out-of-range label, ...).
    #[error("input error: {0}")]
    Input(String),

    /// Invalid prompt specification.
    #[error("prompt spec error: {0}")]
    Spec(String),

    /// Label mapping wider than the pre-trained class count.
    #[error("mapping error: downstream classes {downstream} exceed pre-trained classes {pretrained}")]
    Mapping { downstream: usize, pretrained: usize },

    /// Training diverged (non-finite loss).
    #[error("training error at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    /// A sampling plan cannot be satisfied by the pool.
    #[error("sampling error in cell {cell}: requested {requested}, available {available}")]
    Sampling {
        cell: String,
        requested: usize,
        available: usize,
    },

    /// Prompt does not fit the attack-model canvas.
    #[error("encoding error: {0}")]
    Encoding(String),

    /// Missing or inconsistent model registry entry.
    #[error("registry error: {0}")]
    Registry(String),

    /// Pearson correlation undefined (zero variance).
    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    /// Malformed persisted artifact (prompt file, registry blob, manifest).
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
