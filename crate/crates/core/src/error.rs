use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate point: the zero vector has no direction")]
    DegeneratePoint,
    #[error("polar frame undefined at |t| = 1")]
    PolarFrame,
    #[error("outside open ball: {0}")]
    OutsideBall(f64),
    #[error("invalid radius ratio sigma = {0}")]
    InvalidSigma(f64),
    #[error("use combined form: grad q is undefined at x = 0 for m = 1")]
    UseCombinedForm,
    #[error("series budget exceeded: more than {0} terms required")]
    BudgetExceeded(usize),
    #[error("degenerate candidate: B = {0}")]
    DegenerateCandidate(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("zero reference norm")]
    ZeroNorm,
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
