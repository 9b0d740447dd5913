//! Implicit Euler finite-volume solver: residual and Jacobian assembly,
//! damped Newton iterations, and time-stepping drivers.

mod newton;
mod scheme;
mod stepping;

pub use newton::{newton_solve, NewtonStats};
pub use scheme::{
    assemble_jacobian, assemble_residual, dense_fd_jacobian, fd_increment, JacobianStencil,
    SparseJacobian,
};
pub use stepping::{
    advance_adaptive, initial_report, simulate, AdaptiveStepper, Observer, SolverConfig,
    StepReport, TimeStepMode,
};

use std::fmt;

use crate::edge::EdgeError;
use crate::linalg::LinalgError;
use crate::models::ModelError;

#[derive(Debug)]
pub enum SolveError {
    Edge(EdgeError),
    Model(ModelError),
    /// The Jacobian factorization failed.
    LinearSolveFailure { column: usize },
    /// Newton hit its iteration cap or the damping floor.
    NewtonDiverged { iterations: usize, residual_norm: f64 },
    /// A time-step retry would fall below the configured minimum.
    DtUnderflow { t: f64, dt: f64 },
    Config(String),
    Observer(Box<dyn std::error::Error + Send + Sync>),
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveError::Edge(e) => write!(f, "edge-mean evaluation failed: {e}"),
            SolveError::Model(e) => write!(f, "model evaluation failed: {e}"),
            SolveError::LinearSolveFailure { column } => {
                write!(f, "Newton linear solve failed: singular pivot in column {column}")
            }
            SolveError::NewtonDiverged { iterations, residual_norm } => write!(
                f,
                "Newton did not converge after {iterations} iterations \
                 (residual {residual_norm:.3e})"
            ),
            SolveError::DtUnderflow { t, dt } => {
                write!(f, "time step underflow at t={t}: retry would need dt={dt}")
            }
            SolveError::Config(m) => write!(f, "configuration error: {m}"),
            SolveError::Observer(e) => write!(f, "observer failed: {e}"),
        }
    }
}

impl std::error::Error for SolveError {}

impl From<EdgeError> for SolveError {
    fn from(e: EdgeError) -> Self {
        SolveError::Edge(e)
    }
}

impl From<ModelError> for SolveError {
    fn from(e: ModelError) -> Self {
        SolveError::Model(e)
    }
}

impl From<LinalgError> for SolveError {
    fn from(e: LinalgError) -> Self {
        let LinalgError::SingularPivot { column } = e;
        SolveError::LinearSolveFailure { column }
    }
}
