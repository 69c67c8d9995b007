use thiserror::Error;

/// Errors raised by the spectral laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("deformation error: {0}; remesh or shorten the deformation")]
    Deformation(String),

    #[error("incompatible meshes: {0}")]
    IncompatibleMesh(String),

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("point ({x}, {y}) lies outside the mesh")]
    PointOutside { x: f64, y: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("eigenvalue {index} is not simple (relative gap {gap:e}); the first-order formula does not apply")]
    SimplicityViolation { index: usize, gap: f64 },

    #[error("ambiguous mode pairing at step {step} (best overlap {overlap:.4}); refine the t-grid")]
    Pairing { step: usize, overlap: f64 },

    #[error("validity error: {0}")]
    Validity(String),

    #[error("search work {work} exceeds budget {budget}; lower the height or the number of eigenvalues")]
    Budget { work: u128, budget: u128 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
