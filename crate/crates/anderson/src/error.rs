//! Error type shared by every module of the library.

use thiserror::Error;

/// Errors raised by grid construction, field algebra, solvers and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter violates an operation's precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Two fields living on different grids were combined.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A Neumann series or fixed-point map failed its contraction certificate.
    #[error("map is not contractive (estimated norm {norm:.4}); increase z0 (currently {z0})")]
    NotContractive {
        /// Estimated operator norm of the map that should contract.
        norm: f64,
        /// Shift parameter in use.
        z0: f64,
    },

    /// A resolvent was requested too close to the spectrum.
    #[error("z = {z} lies within {tol:e} of the eigenvalue {nearest}")]
    NearPole {
        /// Requested spectral parameter.
        z: f64,
        /// Closest eigenvalue.
        nearest: f64,
        /// Rejection tolerance.
        tol: f64,
    },

    /// An iterative solver stopped before reaching its tolerance.
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        /// Name of the solver.
        solver: &'static str,
        /// Iterations performed.
        iterations: usize,
        /// Last residual estimate.
        residual: f64,
    },

    /// A LAPACK routine returned a non-zero `info` code.
    #[error("LAPACK routine {routine} failed with info = {info}")]
    Lapack {
        /// Routine name.
        routine: &'static str,
        /// LAPACK `info` value.
        info: i32,
    },

    /// A cache or configuration file is malformed.
    #[error("format error: {0}")]
    Format(String),

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Library result alias.
pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
