use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Pricing was requested exactly at expiry where `d1`/`d2` are undefined.
    #[error("option is at expiry; use the payoff instead")]
    AtExpiry,

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A loss or gradient evaluation produced NaN or infinity.
    #[error("non-finite value at {location}: {detail}")]
    NonFinite { location: String, detail: String },

    #[error("format error: {0}")]
    Format(String),

    /// A data row failed validation. `line` is 1-based and counts the header.
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },

    #[error("singular tridiagonal system at row {0}")]
    Singular(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
