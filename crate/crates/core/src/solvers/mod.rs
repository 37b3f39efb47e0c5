//! Linear and nonlinear solvers written purely against the vector contract:
//! restarted GMRES, preconditioned CG, a batched block-diagonal direct solve,
//! Newton, and Anderson-accelerated fixed point iteration.

mod batched;
mod fixed_point;
mod gmres;
mod newton;
mod pcg;

pub use batched::{batched_factor, BatchedFactors};
pub use fixed_point::{fixed_point, FixedPoint};
pub use gmres::{gmres, Gmres, REORTH_THRESHOLD};
pub use newton::{newton, JacobianRefresh, Newton, NonlinearSystem};
pub use pcg::{pcg, Pcg};

use std::fmt;

use thiserror::Error;

use crate::nvector::{Vector, VectorError};

/// Failure reported by a user callback.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message}")]
pub struct CallbackError {
    pub recoverable: bool,
    pub message: String,
}

impl CallbackError {
    pub fn recoverable(message: impl Into<String>) -> Self {
        CallbackError {
            recoverable: true,
            message: message.into(),
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        CallbackError {
            recoverable: false,
            message: message.into(),
        }
    }
}

impl From<VectorError> for CallbackError {
    fn from(e: VectorError) -> Self {
        CallbackError::fatal(e.to_string())
    }
}

impl From<SolverError> for CallbackError {
    fn from(e: SolverError) -> Self {
        CallbackError {
            recoverable: e.recoverable(),
            message: e.to_string(),
        }
    }
}

pub type CbResult<T> = Result<T, CallbackError>;

/// Matrix-free operator with an optional left preconditioner.
pub trait LinearOperator<V: Vector> {
    fn apply(&mut self, x: &V, y: &mut V) -> CbResult<()>;

    fn has_psolve(&self) -> bool {
        false
    }

    /// Approximately solves `P z = r`. The default is the identity.
    fn psolve(&mut self, r: &V, z: &mut V) -> CbResult<()> {
        z.copy_from(r)?;
        Ok(())
    }
}

/// Operator built from a closure, without a preconditioner.
pub struct FnOperator<A>(pub A);

impl<V, A> LinearOperator<V> for FnOperator<A>
where
    V: Vector,
    A: FnMut(&V, &mut V) -> CbResult<()>,
{
    fn apply(&mut self, x: &V, y: &mut V) -> CbResult<()> {
        (self.0)(x, y)
    }
}

/// Operator and preconditioner built from closures.
pub struct FnPreconditioned<A, P> {
    pub apply: A,
    pub psolve: P,
}

impl<V, A, P> LinearOperator<V> for FnPreconditioned<A, P>
where
    V: Vector,
    A: FnMut(&V, &mut V) -> CbResult<()>,
    P: FnMut(&V, &mut V) -> CbResult<()>,
{
    fn apply(&mut self, x: &V, y: &mut V) -> CbResult<()> {
        (self.apply)(x, y)
    }
    fn has_psolve(&self) -> bool {
        true
    }
    fn psolve(&mut self, r: &V, z: &mut V) -> CbResult<()> {
        (self.psolve)(r, z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureReason {
    MaxIterations,
    Breakdown,
    LinearSolve,
    ResidualCallback,
    Operator,
}

impl FailureReason {
    pub fn name(self) -> &'static str {
        match self {
            FailureReason::MaxIterations => "max_iterations",
            FailureReason::Breakdown => "breakdown",
            FailureReason::LinearSolve => "linear_solve",
            FailureReason::ResidualCallback => "residual_callback",
            FailureReason::Operator => "operator",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveStats {
    pub iterations: usize,
    /// Linear iterations accumulated inside a nonlinear solve.
    pub inner_iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
    pub failure: Option<FailureReason>,
}

impl SolveStats {
    pub const CSV_HEADER: &'static str =
        "solver,iterations,inner_iterations,residual_norm,converged,failure";

    pub fn csv_row(&self, solver: &str) -> String {
        format!(
            "{},{},{},{:e},{},{}",
            solver,
            self.iterations,
            self.inner_iterations,
            self.residual_norm,
            self.converged,
            self.failure.map_or("", FailureReason::name)
        )
    }

    fn failed(mut self, reason: FailureReason) -> Self {
        self.converged = false;
        self.failure = Some(reason);
        self
    }
}

impl fmt::Display for SolveStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} iterations, residual {:e}, {}",
            self.iterations,
            self.residual_norm,
            if self.converged { "converged" } else { "not converged" }
        )
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("no convergence within the iteration limit ({0})")]
    MaxIterations(SolveStats),
    #[error("Krylov breakdown before convergence ({0})")]
    Breakdown(SolveStats),
    #[error("linear solve failed: {source}")]
    LinearSolveFailure { stats: SolveStats, source: CallbackError },
    #[error("residual evaluation failed: {source}")]
    ResidualCallbackFailure { stats: SolveStats, source: CallbackError },
    #[error("operator application failed: {source}")]
    OperatorFailure { stats: SolveStats, source: CallbackError },
    #[error("block {0} is singular")]
    SingularBlock(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Vector(#[from] VectorError),
}

impl SolverError {
    /// Whether a caller such as a time stepper may retry with a smaller step.
    pub fn recoverable(&self) -> bool {
        match self {
            SolverError::MaxIterations(_) | SolverError::Breakdown(_) => true,
            SolverError::LinearSolveFailure { source, .. }
            | SolverError::ResidualCallbackFailure { source, .. }
            | SolverError::OperatorFailure { source, .. } => source.recoverable,
            _ => false,
        }
    }

    pub fn stats(&self) -> Option<&SolveStats> {
        match self {
            SolverError::MaxIterations(s) | SolverError::Breakdown(s) => Some(s),
            SolverError::LinearSolveFailure { stats, .. }
            | SolverError::ResidualCallbackFailure { stats, .. }
            | SolverError::OperatorFailure { stats, .. } => Some(stats),
            _ => None,
        }
    }
}

pub type SResult<T> = Result<T, SolverError>;

fn norm2<V: Vector>(x: &V) -> Result<f64, VectorError> {
    Ok(x.dot(x)?.sqrt())
}
