use thiserror::Error;

/// Errors reported by the solver library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SgnError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("axis {axis} out of range for a {dim}-dimensional grid")]
    AxisOutOfRange { axis: usize, dim: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("expected {expected} vector components, found {found}")]
    ComponentMismatch { expected: usize, found: usize },
    #[error("water depth must be positive everywhere (min = {min})")]
    NonPositiveDepth { min: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("operator is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("dense assembly of size {size} exceeds the guard of {max}")]
    SizeGuard { size: usize, max: usize },
    #[error("PCG breakdown at iteration {iteration}: p^T G p = {curvature:e}")]
    Breakdown { iteration: usize, curvature: f64 },
    #[error("PCG did not reach tol {tol:e} within {max_iter} iterations (eps = {eps:e})")]
    NotConverged { tol: f64, max_iter: usize, eps: f64 },
    #[error("degenerate characteristic polynomial")]
    DegeneratePolynomial,
    #[error("non-finite values encountered: {0}")]
    NonFinite(String),
}

pub type Result<T, E = SgnError> = std::result::Result<T, E>;
