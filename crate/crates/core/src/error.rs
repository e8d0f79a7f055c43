//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RmnError {
    #[error("{op}: shape mismatch, expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("{0}: empty input")]
    EmptyInput(&'static str),
    #[error("{what}: {why}")]
    InvalidArgument { what: &'static str, why: String },
    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),
    #[error("unknown parameter name `{0}`")]
    UnknownParam(String),
    #[error("token id {id} out of range for vocabulary of size {vocab}")]
    InvalidTokenId { id: u32, vocab: usize },
    #[error("loss diverged at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("function is not deterministic: two identical evaluations disagree")]
    NonDeterministic,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("config: {0}")]
    Config(String),
    #[error("parse file: {0}")]
    ParseFile(String),
    #[error("items file: {0}")]
    ItemsFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RmnError>;
