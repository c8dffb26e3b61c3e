//! Error type shared by all solver modules.

use thiserror::Error;

/// Errors reported by grid builders, operator assembly, time steppers and
/// the calibration loop.
#[derive(Error, Debug)]
pub enum Error {
    /// A constructor or solver argument violates its documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A model parameter set fails validation.
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    /// A sampled coefficient is not usable (negative diffusion, NaN, ...).
    #[error("coefficient evaluation failed: {0}")]
    Coefficient(String),

    /// A closed-form density or price is undefined at the requested point.
    #[error("model evaluation failed: {0}")]
    Model(String),

    /// A linear solve failed (singular pivot or non-convergence).
    #[error("linear solver failed: {0}")]
    Solver(String),

    /// The leverage calibration loop hit an unrecoverable state.
    #[error("calibration failed: {0}")]
    Calibration(String),

    /// A root find (implied volatility) could not bracket or converge.
    #[error("root find failed: {0}")]
    RootFind(String),

    /// Reading or parsing an external surface file failed.
    #[error("surface input error: {0}")]
    SurfaceInput(String),

    /// Underlying I/O failure while reading surface files.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
