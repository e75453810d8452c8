//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch between {lhs:?} and {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },

    #[error("{op}: index {index} out of range for size {size}")]
    Index {
        op: &'static str,
        index: usize,
        size: usize,
    },

    #[error("{op}: degenerate input: {detail}")]
    Degenerate { op: &'static str, detail: String },

    #[error("{op}: empty input")]
    EmptyInput { op: &'static str },

    #[error("task graph: {0}")]
    Topology(String),

    #[error("evaluation order: {0}")]
    Ordering(String),

    #[error("label for task '{task}': index {index} out of range for {classes} classes")]
    Label {
        task: String,
        index: usize,
        classes: usize,
    },

    #[error("missing label for task '{0}'")]
    MissingLabel(String),

    #[error("line {line}: parse error: {detail}")]
    Parse { line: usize, detail: String },

    #[error("line {line}: schema violation: {detail}")]
    Schema { line: usize, detail: String },

    #[error("corpus spec: {0}")]
    Spec(String),

    #[error("numeral annotation: {0}")]
    Annotation(String),

    #[error("domain: {0}")]
    Domain(String),

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}
