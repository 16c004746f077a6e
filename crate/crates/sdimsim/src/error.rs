use thiserror::Error;

/// Errors raised by tableau construction, integration and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("step ratio {index} is not strictly positive and finite: {value}")]
    NonPositiveStepRatio { index: usize, value: f64 },

    #[error("method order {0} is not supported (valid orders: 1-4)")]
    InvalidOrder(usize),

    #[error("grid has {points} points, need at least {needed} for order {order}")]
    GridTooShort {
        points: usize,
        needed: usize,
        order: usize,
    },

    #[error("grid points are not strictly increasing at index {0}")]
    NonMonotoneGrid(usize),

    #[error("invalid grid request: {0}")]
    InvalidGrid(String),

    #[error("non-finite {which} evaluation at stage {stage} (x = {x})")]
    NonFiniteEvaluation { which: &'static str, stage: usize, x: f64 },

    #[error("singular {context} system for row {row} (pivot {pivot:e})")]
    SingularSystem {
        context: &'static str,
        row: usize,
        pivot: f64,
    },

    #[error("coefficient solve produced an inconsistent preconsistency column for row {row} (residual {residual:e})")]
    InconsistentFixedParts { row: usize, residual: f64 },

    #[error("no exact solution or reference evaluator available for {0}")]
    MissingTruth(String),

    #[error("reference integrator exceeded {0} steps")]
    StepLimitExceeded(usize),

    #[error("observed order requires strictly positive arguments, got ({ge1}, {ge2}, {n1}, {n2})")]
    NonPositiveOrderInput { ge1: f64, ge2: f64, n1: usize, n2: usize },

    #[error("unknown table format {0:?} (expected csv, markdown or json)")]
    UnknownFormat(String),

    #[error("serialization failed: {0}")]
    Serialization(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
