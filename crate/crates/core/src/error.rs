use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the localization stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid simplex vector: {0}")]
    InvalidSimplex(String),

    #[error("invalid node set: {0}")]
    InvalidNodeSet(String),

    #[error("contract violation: {0}")]
    Contract(String),

    /// A recursive weight landed inside the `|w| <= 1e-12` band, so its sign
    /// cannot be trusted.
    #[error("degenerate weight {value:e} for node {node} in {set:?}")]
    DegenerateWeight {
        set: Vec<usize>,
        node: usize,
        value: f64,
    },

    #[error("set is not a cluster: total weight {0:e} is not positive")]
    NotACluster(f64),

    #[error("oracle guard: {n} nodes exceeds the exact-recursion limit of {limit}")]
    OracleTooLarge { n: usize, limit: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:e}, tolerance {tolerance:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        tolerance: f64,
        best: Vec<f64>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty reference set")]
    EmptyReferences,

    #[error("descriptor index is empty")]
    EmptyIndex,

    #[error("too few query features survived pruning: {survivors} (need at least 2)")]
    TooFewQueryFeatures { survivors: usize },

    #[error("missing global feature `{feature}` for image `{image}`")]
    MissingFeature { feature: String, image: String },

    #[error("constrained solution lost the query node: support {support:?}")]
    QueryNotInSupport { support: Vec<usize> },

    #[error("{path}:{record}: {message}")]
    Schema {
        path: PathBuf,
        record: usize,
        message: String,
    },

    #[error("no reports to evaluate")]
    EmptyReports,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
