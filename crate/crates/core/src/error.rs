use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not reach tolerance {tol:e} within {panels} panels on [{a}, {b}]")]
    Quadrature { a: f64, b: f64, tol: f64, panels: usize },

    #[error("root finding did not converge: {0}")]
    RootFinding(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// A numerical invariant that must hold by construction was violated.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("truncated tail exceeds tolerance: {0}")]
    TailBound(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
