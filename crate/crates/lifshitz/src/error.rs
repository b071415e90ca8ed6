//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("static divergence: Drude model with omega_0 = gamma = 0 evaluated at zeta = 0")]
    StaticDivergence,

    #[error("model has no plasma frequency")]
    NoPlasmaFrequency,

    #[error("tabulated model queried outside its extrapolation policy: {0}")]
    TableRange(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature failed to converge: {0}")]
    ConvergenceFailure(String),

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("eigenvalue solver failed to converge")]
    EigenFailure,

    #[error("log branch violation: mode-matrix eigenvalue {0} <= -1")]
    BranchViolation(f64),

    #[error("coefficient extraction ill-conditioned (condition estimate {0:.3e})")]
    IllConditioned(f64),

    #[error("surfaces in contact: minimum gap {0} <= 0")]
    Contact(f64),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
