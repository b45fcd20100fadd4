use thiserror::Error;

/// Errors raised by curve construction, accounting queries and the verifier.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("bound `{bound}` is not applicable: {reason}")]
    NotApplicable { bound: &'static str, reason: String },

    #[error("quadrature did not converge on [{lo}, {hi}]: estimated error {error:e} above tolerance {tolerance:e}")]
    Quadrature {
        lo: f64,
        hi: f64,
        error: f64,
        tolerance: f64,
    },

    #[error("no candidate satisfies the target budget: {0}")]
    Infeasible(String),

    #[error("curve `{0}` has no serializable mechanism description")]
    NotSerializable(String),

    #[error("malformed ledger: {0}")]
    Ledger(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
