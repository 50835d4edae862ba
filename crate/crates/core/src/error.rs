use thiserror::Error;

use crate::tangent::TangentVector;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("ambiguous geodesic: {0}")]
    AmbiguousGeodesic(String),

    #[error("tangent vector outside the injectivity range: {0}")]
    Range(String),

    #[error("no linear chart at this base point: {0}")]
    NoLinearChart(String),
}

impl GeometryError {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        GeometryError::Input(msg.into())
    }
}

pub type Result<T, E = GeometryError> = std::result::Result<T, E>;

/// Failure modes of the barycenter solvers.
#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        last: Box<crate::barycenter::Solution>,
    },
}

/// Raised by the apex grid search in `verify::subadditive_combine` when no grid
/// candidate satisfies both constraints.
#[derive(Debug, Error)]
#[error(
    "no feasible combination found (inner-product violation {inner_violation:e}, norm violation {norm_violation:e})"
)]
pub struct SearchFailure {
    pub best: TangentVector,
    pub inner_violation: f64,
    pub norm_violation: f64,
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),

    #[error(transparent)]
    Solve(#[from] SolveError),

    #[error(transparent)]
    Search(#[from] SearchFailure),
}
