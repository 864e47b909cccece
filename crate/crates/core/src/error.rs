use thiserror::Error;

/// Unified error type for the crate.
///
/// The CLI maps variants to exit codes: configuration and geometry errors are
/// usage errors (exit 2), everything else is a numerical failure (exit 3).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid polygon: {0}")]
    Geometry(String),

    #[error("quadrature did not converge: residual {residual:.3e} after {refinements} refinements")]
    QuadratureNoConvergence { residual: f64, refinements: u32 },

    #[error("solver did not converge after {iterations} iterations (best residual {residual:.3e})")]
    SolverNoConvergence { iterations: u32, residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),
}

pub type Result<T> = std::result::Result<T, Error>;
