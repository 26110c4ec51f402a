//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A hazard or likelihood evaluation left the representable range.
    /// Carries enough context to locate the offending subject and values.
    #[error("numerical domain error in {context}: {detail}")]
    Domain { context: &'static str, detail: String },

    /// An argument violated a documented precondition.
    #[error("invalid argument for {context}: {detail}")]
    Argument { context: &'static str, detail: String },

    /// The dataset itself cannot support the requested operation.
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// The observed information matrix is singular or not positive definite.
    #[error(
        "observed information is singular or not positive definite \
         (smallest eigenvalue {min_eigenvalue:.6e})"
    )]
    Conditioning { min_eigenvalue: f64 },

    /// Interval machinery could not bracket a root.
    #[error("failed to bracket {context} within {attempts} expansion steps")]
    Bracket { context: &'static str, attempts: usize },

    /// An optimization that an interval or study step depends on did not converge.
    #[error("optimization did not converge: {0}")]
    NonConvergence(String),

    /// Censoring calibration could not match the requested rate.
    #[error("censoring calibration failed: {0}")]
    Calibration(String),

    /// A config or dataset file could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(context: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain { context, detail: detail.into() }
    }

    pub fn argument(context: &'static str, detail: impl Into<String>) -> Self {
        Error::Argument { context, detail: detail.into() }
    }
}
