use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot parse {what} from {input:?}: {reason}")]
    Parse {
        what: &'static str,
        input: String,
        reason: String,
    },

    #[error("norm on the q-space is not integer-normalized (minimum over nonzero integer vectors is {min})")]
    NotNormalized { min: f64 },

    #[error("region is degenerate: {accepted} of {attempts} rejection samples accepted")]
    DegenerateRegion { accepted: u64, attempts: u64 },

    #[error("rejection budget of {attempts} attempts exhausted")]
    BudgetExhausted { attempts: usize },

    #[error("basis is ill-conditioned (condition number {cond:e})")]
    IllConditioned { cond: f64 },

    #[error("not enough usable points for a fit: {usable} usable, {needed} needed")]
    InsufficientData { usable: usize, needed: usize },

    #[error("unsupported region for this operation: {0}")]
    UnsupportedRegion(String),

    #[error("oracle mismatch: {0}")]
    OracleMismatch(String),

    #[error("count overflowed 64 bits")]
    Overflow,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn parse(what: &'static str, input: &str, reason: impl Into<String>) -> Self {
        Error::Parse {
            what,
            input: input.to_owned(),
            reason: reason.into(),
        }
    }
}
