use thiserror::Error;

/// Errors raised by the numerical routines and the CLI plumbing.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("non-finite value {value} while evaluating at {point:?}")]
    NonFinite { point: Vec<f64>, value: f64 },

    #[error("point {point:?} lies outside the function domain")]
    OutsideDomain { point: Vec<f64> },

    #[error("parse error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("unknown builtin `{name}`; available: {available}")]
    UnknownBuiltin { name: String, available: String },

    #[error("inconsistent linear map: {0}")]
    Consistency(String),

    #[error(
        "semi-linear subspace needs {found} rays after canonicalization (at most 2 supported)"
    )]
    TooManyRays { found: usize },

    #[error("difference-quotient ladder did not converge: {trace:?}")]
    Nonconvergent { trace: Vec<(f64, f64)> },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("rank deficient: requested {requested}, achievable {achievable}")]
    RankDeficient { requested: usize, achievable: usize },

    #[error("minimizer attained on the search-box boundary at {point:?}")]
    BoundaryMinimum { point: Vec<f64> },

    #[error("linear program failed: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
