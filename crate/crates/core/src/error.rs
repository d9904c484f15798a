use thiserror::Error;

use crate::optimizer::KktDiagnostics;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point ({x}, {y}, {t}) lies outside the space-time domain")]
    OutOfDomain { x: f64, y: f64, t: f64 },

    #[error("triangle {index} is degenerate (signed area {area:e})")]
    DegenerateTriangle { index: usize, area: f64 },

    #[error("slab index {slab} out of range 1..={steps}")]
    SlabOutOfRange { slab: usize, steps: usize },

    #[error("fields live on different meshes: {0}")]
    MeshMismatch(String),

    #[error("linear solve on slab {slab} did not converge (relative residual {residual:e})")]
    SolverNonconvergence { slab: usize, residual: f64 },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("conjugate gradient broke down after {iterations} iterations (relative residual {residual:e})")]
    CgBreakdown { iterations: usize, residual: f64 },

    #[error("active set iteration did not converge within {} outer iterations", .0.outer_iterations)]
    PdasNonconvergence(Box<KktDiagnostics>),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical algorithms, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SolverNonconvergence { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::CgBreakdown { .. }
                | Error::PdasNonconvergence(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
