use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("reference consistency: {0}")]
    Consistency(String),

    #[error("enumeration budget exceeded: {tuples} candidate tuples (budget {budget})")]
    BudgetExceeded { tuples: f64, budget: u64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("covariance is not positive definite (smallest eigenvalue {smallest_eigenvalue:e})")]
    NotPositiveDefinite { smallest_eigenvalue: f64 },

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("no correct/incorrect candidate pairs found in the table")]
    NoPairs,

    #[error(
        "calibration diverged at step {step}: {reason}; the gold-reward objective \
         may have no maximizer with finite weights, try weight decay > 0"
    )]
    Divergence { step: usize, reason: String },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}
