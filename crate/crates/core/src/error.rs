use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the imputation engines and diagnostics.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A matrix that must be (semi-)definite or nonsingular is not.
    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    /// Design columns (0-based, in term order) that are linearly dependent.
    #[error("singular design: dependent columns {columns:?} (condition number {condition:e})")]
    SingularDesign { columns: Vec<usize>, condition: f64 },

    #[error("logistic fit diverged (complete or quasi-complete separation): {0}")]
    Separation(String),

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("initialization error: {0}")]
    Initialization(String),

    /// A conditional fit failed inside a sweep.
    #[error("fitting variable `{variable}` at iteration {iteration}: {source}")]
    Fit {
        variable: String,
        iteration: usize,
        source: Box<Error>,
    },

    /// A sweep failed; `iteration` is the 1-based sweep that failed.
    #[error("chain aborted at iteration {iteration}: {source}")]
    Sweep { iteration: usize, source: Box<Error> },

    #[error("chain {chain}: {source}")]
    Chain { chain: usize, source: Box<Error> },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::Error::InvalidArgument(alloc::format!($($arg)*))
    };
}

macro_rules! domain {
    ($($arg:tt)*) => {
        $crate::Error::NumericDomain(alloc::format!($($arg)*))
    };
}

pub(crate) use domain;
pub(crate) use invalid;
