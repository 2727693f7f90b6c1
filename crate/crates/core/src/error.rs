//! Error type shared by every module of the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// SVD or eigen-decomposition did not converge.
    #[error("numerical failure ({op}) on a {rows}x{cols} matrix")]
    Numerical {
        op: &'static str,
        rows: usize,
        cols: usize,
    },

    /// Input violates a documented contract (shape, symmetry, finiteness).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Dimensions of two operands do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A matrix that must be Schur stable is not.
    #[error("unstable matrix: spectral radius {radius} >= 1")]
    Unstable { radius: f64 },

    /// Iterative solver hit its iteration cap.
    #[error("{solver} did not converge after {iterations} iterations (last residual {residual:e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// Task sampling failed (list exhausted or rejection cap reached).
    #[error("task sampling failed: {0}")]
    Sampling(String),

    /// A theoretical bound was evaluated outside its validity region.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Logarithm argument outside (1, inf) or (0, inf) where required.
    #[error("log-domain error: {0}")]
    LogDomain(String),

    /// Excitation envelope is degenerate (zero minimum eigenvalue).
    #[error("degenerate excitation: {0}")]
    DegenerateExcitation(String),

    /// Gradient descent blew up.
    #[error("gradient descent diverged (objective {objective:e} vs initial {initial:e}); try a smaller learning rate")]
    Divergence { objective: f64, initial: f64 },

    /// Malformed or invalid configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by the numbers rather than by the user's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical { .. }
                | Error::Unstable { .. }
                | Error::NonConvergence { .. }
                | Error::Divergence { .. }
                | Error::Sampling(_)
                | Error::Precondition(_)
                | Error::LogDomain(_)
                | Error::DegenerateExcitation(_)
        )
    }
}
