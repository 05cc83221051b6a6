use thiserror::Error;

use crate::grid::Space;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Parameter(String),

    #[error("symbol gradient is singular at xi = 0 for rho = {rho} < 1")]
    Singularity { rho: f64 },

    #[error("field is in {found} space, expected {expected} space")]
    State { expected: Space, found: Space },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("multiplier is not finite at xi = {xi:?}")]
    NonFinite { xi: Vec<f64> },

    #[error("under-resolved: {0}")]
    Resolution(String),

    #[error("wrap guard tripped at step {step}: mass fraction {mass:.3e} outside the guard box")]
    DomainEscape { step: usize, mass: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("out of scope: {0}")]
    Scope(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(
        "horizon T = {horizon} too short: Cook tail {tail:.3e} exceeds tolerance {tolerance:.3e}; \
         suggested T = {suggested:.4}"
    )]
    HorizonTooShort {
        horizon: f64,
        tail: f64,
        tolerance: f64,
        suggested: f64,
    },

    #[error("malformed field dump: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn resolution(msg: impl Into<String>) -> Self {
        Error::Resolution(msg.into())
    }
}
