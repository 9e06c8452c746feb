use thiserror::Error;

/// Errors raised across the capacity routes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("constrained system is empty: every symbol is forbidden")]
    EmptySystem,

    #[error("invalid Markov chain: {0}")]
    InvalidChain(String),

    #[error("matrix is reducible")]
    Reducible,

    #[error("matrix is zero")]
    ZeroMatrix,

    #[error("{method} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("target expectation appears infeasible: |xi| = {xi_norm:.3e}, gradient norm {gradient_norm:.3e}")]
    Infeasible { xi_norm: f64, gradient_norm: f64 },

    #[error("state space too large ({estimate:.3e} cells > {limit:.0e}); shrink n")]
    TooLarge { estimate: f64, limit: f64 },

    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    /// True for errors caused by bad input rather than solver failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::Precondition(_)
                | Error::TooLarge { .. }
                | Error::EmptySystem
                | Error::Serialization(_)
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
