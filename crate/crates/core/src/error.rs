//! Shared error type for the crate.
//!
//! Every fallible operation returns [`Result`]; errors carry enough context
//! (offending value, layer index, byte offset) to diagnose a failure without
//! re-running under a debugger.

/// Errors produced by mechanism, range, shuffle, model and federation code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Privacy budget below the smallest epsilon the mechanism accepts.
    #[error("privacy budget epsilon {epsilon} is below the minimum {minimum}")]
    BudgetTooSmall { epsilon: f64, minimum: f64 },

    /// Privacy budget that is NaN or infinite.
    #[error("privacy budget epsilon must be finite, got {0}")]
    BudgetNotFinite(f64),

    /// A weight handed to the mechanism outside the declared range.
    /// Perturbation never clips silently; the caller must clip first.
    #[error("weight {weight} lies outside the declared range [{low}, {high}]")]
    WeightOutOfRange { weight: f64, low: f64, high: f64 },

    /// Range radius that is zero, negative, or non-finite.
    #[error("range radius must be positive and finite, got {0}")]
    InvalidRadius(f64),

    /// Range center that is non-finite.
    #[error("range center must be finite, got {0}")]
    InvalidCenter(f64),

    /// Failure probability outside (0, 1].
    #[error("failure probability beta must lie in (0, 1], got {0}")]
    InvalidBeta(f64),

    /// A count parameter (clients, samples, repetitions) that must be >= 1.
    #[error("{what} must be at least 1, got {got}")]
    CountTooSmall { what: &'static str, got: usize },

    /// Aggregation over an empty collection.
    #[error("cannot aggregate an empty collection of {0}")]
    EmptyAggregate(&'static str),

    /// A non-finite weight surfaced where finite values are required.
    #[error("non-finite weight encountered in layer {layer} at offset {offset}")]
    NonFiniteWeight { layer: usize, offset: usize },

    /// A client timing profile slower than the declared slowest response.
    #[error("client response time {response} exceeds the declared slowest response {slowest}")]
    ProfileExceedsSlowest { response: f64, slowest: f64 },

    /// A timing value (latency, window, jitter) that is negative or non-finite.
    #[error("{what} must be non-negative and finite, got {got}")]
    InvalidTiming { what: &'static str, got: f64 },

    /// The same weight id reported twice by one client in one round.
    #[error("duplicate report for layer {layer} offset {offset} within a single client batch")]
    DuplicateWeightId { layer: usize, offset: usize },

    /// A weight id with the wrong number of reports after collection.
    #[error("layer {layer} offset {offset} received {got} reports, expected {expected}")]
    ReportCountMismatch {
        layer: usize,
        offset: usize,
        expected: usize,
        got: usize,
    },

    /// A report whose id does not exist in the model being aggregated.
    #[error("report id layer {layer} offset {offset} does not match the model shape")]
    UnknownWeightId { layer: usize, offset: usize },

    /// Mismatched tensor shapes in model or aggregation code.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Invalid model architecture (fewer than two dims, a zero dim, ...).
    #[error("invalid model architecture: {0}")]
    BadArchitecture(String),

    /// Dataset/configuration combinations that cannot run.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Malformed IDX file. The offset is the absolute byte position of the
    /// first inconsistency.
    #[error("malformed idx data at byte {offset}: {message}")]
    IdxFormat { offset: usize, message: String },

    /// Underlying I/O failure while reading datasets.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
