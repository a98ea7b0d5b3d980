use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("outcome {index} out of range for an event with {outcomes} outcomes")]
    OutcomeOutOfRange { index: usize, outcomes: usize },

    #[error("dimension mismatch: expected {expected} outcomes, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An extended-real computation produced NaN (e.g. `inf - inf`).
    #[error("indeterminate value (NaN) in {0}")]
    Indeterminate(&'static str),

    #[error("merge rule {rule} does not support events with {outcomes} outcomes")]
    UnsupportedMerge { rule: &'static str, outcomes: usize },

    #[error("estimate {0} is not in the interior of the simplex")]
    BoundaryEstimate(String),

    #[error("market is closed")]
    MarketClosed,

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("invalid ledger: {0}")]
    InvalidLedger(String),

    #[error("slot {slot} is claimed by both {first} and {second}")]
    SlotConflict {
        slot: usize,
        first: String,
        second: String,
    },

    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),

    #[error("search space holds {estimate} strategies, above the cap of {cap}")]
    SearchSpaceTooLarge { estimate: u128, cap: u64 },

    #[error("unrecoverable price path at trade {seq}: {reason}")]
    PricePath { seq: usize, reason: String },

    #[error("invalid scenario at `{path}`: {message}")]
    InvalidScenario { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Subtraction on the extended real line; `inf - inf` is an error, never NaN.
pub(crate) fn ext_sub(a: f64, b: f64, context: &'static str) -> Result<f64> {
    let d = a - b;
    if d.is_nan() {
        Err(Error::Indeterminate(context))
    } else {
        Ok(d)
    }
}

pub(crate) fn not_nan(x: f64, context: &'static str) -> Result<f64> {
    if x.is_nan() {
        Err(Error::Indeterminate(context))
    } else {
        Ok(x)
    }
}
