//! Error types shared across the toolkit.

use thiserror::Error;

/// Unified error type for all quantification operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Input that cannot carry any information (empty, all-zero, negative mass).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Non-finite values or other floating-point trouble.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A caller broke an interface contract (dimension mismatch, missing input).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A scalar argument outside its documented range.
    #[error("out of range: {0}")]
    Range(String),

    /// A transform that needs 0/1 features received something else.
    #[error("binary features required: {0}")]
    BinaryFeaturesRequired(String),

    /// A class with no training rows where per-class statistics are needed.
    #[error("degenerate class: {0}")]
    DegenerateClass(String),

    /// A classifier whose rates carry no signal (tpr == fpr).
    #[error("degenerate classifier: {0}")]
    DegenerateClassifier(String),

    /// A regression system that violates a solver precondition.
    #[error("invalid system: {0}")]
    InvalidSystem(String),

    /// An optimizer failed to produce a usable answer.
    #[error("solver failure: {0}")]
    SolverFailure(String),

    /// Stratified folds cannot be constructed from the given labels.
    #[error("stratification error: {0}")]
    Stratification(String),

    /// Invalid or inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed or inconsistent data files / datasets.
    #[error("data error: {0}")]
    Data(String),

    /// A class pool too small to materialize the requested test set.
    #[error("pool exhausted for class '{class}': need {needed} rows, have {available}")]
    PoolExhausted {
        class: String,
        needed: usize,
        available: usize,
    },

    /// A reweighting ratio with a zero denominator.
    #[error("division by zero: {0}")]
    DivisionByZero(String),
}

pub type Result<T> = std::result::Result<T, Error>;
