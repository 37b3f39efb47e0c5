//! Adaptive additive Runge-Kutta time stepping for `y' = f_E(t, y) + f_I(t, y)`
//! with the stiff part `f_I` treated implicitly.

mod ark;
mod controller;
mod stage;
mod tableau;

pub use ark::{ArkStepper, IntegratorOptions, RunStats, StepOutcome, StepRecord};
pub use controller::ControllerParams;
pub use stage::{
    FixedPointStageSolver, NewtonStageSolver, StageData, StageLinearSolver, StageSolver,
    DEFAULT_MAX_NONLINEAR_ITERS,
};
pub use tableau::{verify_tableau_order, ButcherPair, OrderCondition, OrderReport, Tableau};

use thiserror::Error;

use crate::nvector::{Vector, VectorError};
use crate::solvers::{CallbackError, CbResult, SolverError};

#[derive(Debug, Error)]
pub enum IntegratorError {
    #[error("invalid tableau: {0}")]
    InvalidTableau(String),
    #[error("invalid tolerances: {0}")]
    InvalidTolerances(String),
    #[error("error weight denominator rtol·|y| + atol is not positive")]
    ZeroWeightDenominator,
    #[error("step size {h:e} fell below the minimum at t = {t}")]
    HMinReached { t: f64, h: f64 },
    #[error("{count} consecutive error test failures at t = {t}")]
    RepeatedErrorTestFailures { t: f64, count: usize },
    #[error("{count} consecutive nonlinear solver failures at t = {t}")]
    RepeatedNonlinearFailures { t: f64, count: usize },
    #[error("step limit of {0} reached")]
    TooManySteps(usize),
    #[error("right-hand side failed: {0}")]
    Rhs(CallbackError),
    #[error(transparent)]
    Solver(SolverError),
    #[error(transparent)]
    Vector(#[from] VectorError),
}

pub type IResult<T> = Result<T, IntegratorError>;

/// Which parts of the split right-hand side are present.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parts {
    Both,
    ExplicitOnly,
    ImplicitOnly,
}

impl Parts {
    pub fn explicit(self) -> bool {
        self != Parts::ImplicitOnly
    }
    pub fn implicit(self) -> bool {
        self != Parts::ExplicitOnly
    }
}

/// The split right-hand side `f_E + f_I`.
pub trait Rhs<V: Vector> {
    fn explicit(&mut self, t: f64, y: &V, f: &mut V) -> CbResult<()>;
    fn implicit(&mut self, t: f64, y: &V, f: &mut V) -> CbResult<()>;
    fn parts(&self) -> Parts {
        Parts::Both
    }
}

/// Right-hand side assembled from two closures.
pub struct SplitRhs<E, I> {
    pub explicit: E,
    pub implicit: I,
    pub parts: Parts,
}

pub type RhsFn<V> = fn(f64, &V, &mut V) -> CbResult<()>;

fn zero_rhs<V: Vector>(_: f64, _: &V, f: &mut V) -> CbResult<()> {
    f.const_fill(0.0)?;
    Ok(())
}

impl<E, I> SplitRhs<E, I> {
    pub fn imex(explicit: E, implicit: I) -> Self {
        SplitRhs {
            explicit,
            implicit,
            parts: Parts::Both,
        }
    }
}

impl<V: Vector, E> SplitRhs<E, RhsFn<V>> {
    pub fn explicit_only(explicit: E) -> Self {
        SplitRhs {
            explicit,
            implicit: zero_rhs::<V>,
            parts: Parts::ExplicitOnly,
        }
    }
}

impl<V: Vector, I> SplitRhs<RhsFn<V>, I> {
    pub fn implicit_only(implicit: I) -> Self {
        SplitRhs {
            explicit: zero_rhs::<V>,
            implicit,
            parts: Parts::ImplicitOnly,
        }
    }
}

impl<V, E, I> Rhs<V> for SplitRhs<E, I>
where
    V: Vector,
    E: FnMut(f64, &V, &mut V) -> CbResult<()>,
    I: FnMut(f64, &V, &mut V) -> CbResult<()>,
{
    fn explicit(&mut self, t: f64, y: &V, f: &mut V) -> CbResult<()> {
        (self.explicit)(t, y, f)
    }
    fn implicit(&mut self, t: f64, y: &V, f: &mut V) -> CbResult<()> {
        (self.implicit)(t, y, f)
    }
    fn parts(&self) -> Parts {
        self.parts
    }
}

#[derive(Debug)]
pub enum Atol<V> {
    Scalar(f64),
    Vector(V),
}

#[derive(Debug)]
pub struct Tolerances<V> {
    pub rtol: f64,
    pub atol: Atol<V>,
}

impl<V: Vector> Tolerances<V> {
    pub fn scalar(rtol: f64, atol: f64) -> Self {
        Tolerances {
            rtol,
            atol: Atol::Scalar(atol),
        }
    }

    pub fn validate(&self) -> IResult<()> {
        let bad = |m: &str| Err(IntegratorError::InvalidTolerances(m.into()));
        if !(self.rtol >= 0.0) {
            return bad("rtol must be nonnegative");
        }
        match &self.atol {
            Atol::Scalar(a) if !(*a >= 0.0) => bad("atol must be nonnegative"),
            Atol::Scalar(a) if *a == 0.0 && self.rtol == 0.0 => bad("rtol and atol are both zero"),
            Atol::Vector(a) if a.min_val()? < 0.0 => bad("atol must be nonnegative"),
            _ => Ok(()),
        }
    }
}

/// Error weights `w_i = 1 / (rtol·|y_i| + atol_i)`.
pub fn ewt<V: Vector>(y: &V, tol: &Tolerances<V>, w: &mut V) -> IResult<()> {
    w.abs_val(y)?;
    match &tol.atol {
        Atol::Scalar(a) => {
            w.unary_in_place(crate::nvector::UnaryOp::Scale(tol.rtol))?;
            w.unary_in_place(crate::nvector::UnaryOp::AddConst(*a))?;
        }
        Atol::Vector(a) => w.scale_add(tol.rtol, 1.0, a)?,
    }
    if !(w.min_val()? > 0.0) {
        return Err(IntegratorError::ZeroWeightDenominator);
    }
    w.unary_in_place(crate::nvector::UnaryOp::Inv)?;
    Ok(())
}
