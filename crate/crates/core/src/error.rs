use std::time::Duration;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error for the explanation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A JSON document did not match the expected schema. `path` is a JSON
    /// path such as `$.edges[3]`.
    #[error("{path}: {message}")]
    Schema { path: String, message: String },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The scheme cannot produce features for the requested unit kind.
    #[error("incompatible request: {0}")]
    Incompatible(String),

    #[error("model is constant under this perturbation scheme")]
    ConstantModel,

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Failures raised while evaluating a black-box model.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("transport failure: {0}")]
    Transport(String),

    #[error("no response within {0:?}")]
    Timeout(Duration),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("model reported error for request {id}: {message}")]
    Remote { id: u64, message: String },

    #[error("prediction {0:?} is not a probability vector")]
    NonSimplex(Vec<f64>),

    #[error("expected {expected} classes, got {actual}")]
    ClassMismatch { expected: usize, actual: usize },

    #[error("model accepts {expected} inputs, got {actual}")]
    InputKind {
        expected: &'static str,
        actual: &'static str,
    },
}
