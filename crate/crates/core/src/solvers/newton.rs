use super::{CbResult, FailureReason, SResult, SolveStats, SolverError};
use crate::nvector::Vector;

/// Callbacks defining `F(y) = 0` and the linear systems `M δ = −F`.
pub trait NonlinearSystem<V: Vector> {
    fn residual(&mut self, y: &V, f: &mut V) -> CbResult<()>;

    /// Prepares the linear solver at `y`, for instance by evaluating and
    /// factoring a Jacobian.
    fn setup(&mut self, y: &V, f: &V) -> CbResult<()>;

    /// Solves `M δ = rhs`. Returns the number of linear iterations used.
    fn solve(&mut self, y: &V, rhs: &V, delta: &mut V) -> CbResult<usize>;
}

/// When the linear solver is set up again during one nonlinear solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianRefresh {
    /// Once, at the initial iterate (modified Newton).
    OncePerSolve,
    /// Before every iteration (full Newton).
    EveryIteration,
}

/// Newton iteration `y ← y + δ`, `M δ = −F(y)`. Converged once the WRMS norm
/// of the correction or of the new residual drops below `tol`.
pub struct Newton<V> {
    pub tol: f64,
    pub max_iters: usize,
    pub refresh: JacobianRefresh,
    f: V,
    rhs: V,
    delta: V,
    history: Vec<f64>,
}

impl<V: Vector> Newton<V> {
    pub fn new(template: &V, tol: f64, max_iters: usize) -> Self {
        Newton {
            tol,
            max_iters,
            refresh: JacobianRefresh::OncePerSolve,
            f: template.duplicate(),
            rhs: template.duplicate(),
            delta: template.duplicate(),
            history: Vec::new(),
        }
    }

    pub fn with_refresh(mut self, refresh: JacobianRefresh) -> Self {
        self.refresh = refresh;
        self
    }

    /// WRMS norms of the corrections taken in the last solve.
    pub fn correction_history(&self) -> &[f64] {
        &self.history
    }

    /// Residual at the final iterate of the last solve.
    pub fn last_residual(&self) -> &V {
        &self.f
    }

    pub fn solve<S: NonlinearSystem<V>>(&mut self, sys: &mut S, y: &mut V, ewt: &V) -> SResult<SolveStats> {
        let mut stats = SolveStats::default();
        self.history.clear();
        let residual_fail = |stats: &SolveStats, source| SolverError::ResidualCallbackFailure {
            stats: stats.clone().failed(FailureReason::ResidualCallback),
            source,
        };
        let linear_fail = |stats: &SolveStats, source| SolverError::LinearSolveFailure {
            stats: stats.clone().failed(FailureReason::LinearSolve),
            source,
        };

        sys.residual(y, &mut self.f).map_err(|e| residual_fail(&stats, e))?;
        stats.residual_norm = self.f.wrms_norm(ewt)?;
        while stats.iterations < self.max_iters {
            if stats.iterations == 0 || self.refresh == JacobianRefresh::EveryIteration {
                sys.setup(y, &self.f).map_err(|e| linear_fail(&stats, e))?;
            }
            self.rhs.scale(-1.0, &self.f)?;
            let lin = sys
                .solve(y, &self.rhs, &mut self.delta)
                .map_err(|e| linear_fail(&stats, e))?;
            stats.inner_iterations += lin;
            y.scale_add(1.0, 1.0, &self.delta)?;
            stats.iterations += 1;

            let corr = self.delta.wrms_norm(ewt)?;
            self.history.push(corr);
            sys.residual(y, &mut self.f).map_err(|e| residual_fail(&stats, e))?;
            let res = self.f.wrms_norm(ewt)?;
            stats.residual_norm = corr.min(res);
            if corr < self.tol || res < self.tol {
                stats.converged = true;
                return Ok(stats);
            }
            if !corr.is_finite() || !res.is_finite() {
                break;
            }
        }
        Err(SolverError::MaxIterations(stats.failed(FailureReason::MaxIterations)))
    }
}

/// One-shot Newton solve with modified-Newton refresh.
pub fn newton<V: Vector, S: NonlinearSystem<V>>(
    sys: &mut S,
    y: &mut V,
    ewt: &V,
    tol: f64,
    max_iters: usize,
) -> SResult<SolveStats> {
    Newton::new(y, tol, max_iters).solve(sys, y, ewt)
}
