//! Crate-wide error type.
//!
//! Variants are grouped by what the caller should do with them: `Input`-class
//! errors mean the problem description is malformed, `Numerical` means an
//! evaluation or solve broke down, and `Verdict` failures are reported through
//! check results rather than this enum.

use crate::expr::ExprError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("non-finite value: {what} at x={x:?}, u={u}, xi={xi:?}")]
    NonFinite { what: String, x: Vec<f64>, u: f64, xi: Vec<f64> },

    #[error(
        "all sampled ratios degenerate: {skipped} of {total} samples had \
         density below the degeneracy floor"
    )]
    AllDegenerate { skipped: usize, total: usize },

    #[error("exponent formula undefined: {0}")]
    Exponent(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("no admissible threshold: {0}")]
    NoThreshold(String),

    #[error("certificate invalid: {0}")]
    InvalidCertificate(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Error {
        Error::Input(msg.into())
    }
}
