use super::Rhs;
use crate::nvector::Vector;
use crate::solvers::{CbResult, FixedPoint, Newton, NonlinearSystem, SResult, SolveStats};

pub const DEFAULT_MAX_NONLINEAR_ITERS: usize = 3;

/// One implicit stage equation `z − γ f_I(t, z) = d`.
pub struct StageData<'a, V> {
    pub t: f64,
    pub gamma: f64,
    pub d: &'a V,
    pub ewt: &'a V,
    /// Convergence threshold in the WRMS norm weighted by `ewt`.
    pub tol: f64,
}

/// Solves implicit stage equations. `z` holds the predictor on entry and the
/// stage value on success.
pub trait StageSolver<V: Vector> {
    fn solve<R: Rhs<V>>(&mut self, rhs: &mut R, stage: &StageData<'_, V>, z: &mut V) -> SResult<SolveStats>;

    /// Whether each nonlinear iteration performs one linear solve.
    fn uses_linear_solver(&self) -> bool {
        true
    }
}

/// Linear solver for Newton systems `(I − γ J) δ = r`.
pub trait StageLinearSolver<V: Vector> {
    fn setup(&mut self, t: f64, z: &V, gamma: f64) -> CbResult<()>;
    /// Returns the number of linear iterations used.
    fn solve(&mut self, t: f64, z: &V, gamma: f64, rhs: &V, delta: &mut V) -> CbResult<usize>;
}

/// Newton iteration on the stage residual `z − γ f_I(t, z) − d`.
pub struct NewtonStageSolver<V, L> {
    newton: Newton<V>,
    fi: V,
    pub linear: L,
}

impl<V: Vector, L: StageLinearSolver<V>> NewtonStageSolver<V, L> {
    pub fn new(template: &V, linear: L) -> Self {
        NewtonStageSolver {
            newton: Newton::new(template, 0.1, DEFAULT_MAX_NONLINEAR_ITERS),
            fi: template.duplicate(),
            linear,
        }
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.newton.max_iters = max_iters;
        self
    }
}

struct StageSystem<'a, 'b, V, R, L> {
    rhs: &'a mut R,
    linear: &'a mut L,
    stage: &'a StageData<'b, V>,
    fi: &'a mut V,
}

impl<V: Vector, R: Rhs<V>, L: StageLinearSolver<V>> NonlinearSystem<V> for StageSystem<'_, '_, V, R, L> {
    fn residual(&mut self, z: &V, out: &mut V) -> CbResult<()> {
        self.rhs.implicit(self.stage.t, z, self.fi)?;
        out.linear_sum(1.0, z, -self.stage.gamma, self.fi)?;
        out.scale_add(1.0, -1.0, self.stage.d)?;
        Ok(())
    }

    fn setup(&mut self, z: &V, _f: &V) -> CbResult<()> {
        self.linear.setup(self.stage.t, z, self.stage.gamma)
    }

    fn solve(&mut self, z: &V, rhs: &V, delta: &mut V) -> CbResult<usize> {
        self.linear.solve(self.stage.t, z, self.stage.gamma, rhs, delta)
    }
}

impl<V: Vector, L: StageLinearSolver<V>> StageSolver<V> for NewtonStageSolver<V, L> {
    fn solve<R: Rhs<V>>(&mut self, rhs: &mut R, stage: &StageData<'_, V>, z: &mut V) -> SResult<SolveStats> {
        self.newton.tol = stage.tol;
        let mut sys = StageSystem {
            rhs,
            linear: &mut self.linear,
            stage,
            fi: &mut self.fi,
        };
        self.newton.solve(&mut sys, z, stage.ewt)
    }
}

/// Anderson-accelerated fixed point iteration `z ← d + γ f_I(t, z)`.
pub struct FixedPointStageSolver<V> {
    fp: FixedPoint<V>,
}

impl<V: Vector> FixedPointStageSolver<V> {
    pub fn new(template: &V, anderson_depth: usize, max_iters: usize) -> Self {
        FixedPointStageSolver {
            fp: FixedPoint::new(template, anderson_depth, 0.1, max_iters),
        }
    }
}

impl<V: Vector> StageSolver<V> for FixedPointStageSolver<V> {
    fn solve<R: Rhs<V>>(&mut self, rhs: &mut R, stage: &StageData<'_, V>, z: &mut V) -> SResult<SolveStats> {
        self.fp.tol = stage.tol;
        let mut g = |z: &V, out: &mut V| -> CbResult<()> {
            rhs.implicit(stage.t, z, out)?;
            out.scale_add(stage.gamma, 1.0, stage.d)?;
            Ok(())
        };
        self.fp.solve(&mut g, z, stage.ewt)
    }

    fn uses_linear_solver(&self) -> bool {
        false
    }
}
