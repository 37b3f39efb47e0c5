use super::{
    ewt, ButcherPair, ControllerParams, IResult, IntegratorError, Parts, Rhs, StageData,
    StageSolver, Tolerances,
};
use crate::nvector::Vector;
use crate::solvers::{CbResult, SolveStats, SolverError};

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorOptions {
    pub controller: ControllerParams,
    /// Stage solves must converge to this fraction of the error-test norm.
    pub tol_coef: f64,
    /// Consecutive error test failures tolerated before giving up.
    pub max_error_failures: usize,
    /// Consecutive nonlinear failures tolerated before giving up.
    pub max_nonlinear_failures: usize,
    /// Take uniform steps of this size with no error control.
    pub fixed_step: Option<f64>,
    pub initial_step: Option<f64>,
    pub max_steps: usize,
    pub record_history: bool,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            controller: ControllerParams::default(),
            tol_coef: 0.1,
            max_error_failures: 7,
            max_nonlinear_failures: 10,
            fixed_step: None,
            initial_step: None,
            max_steps: 1_000_000,
            record_history: false,
        }
    }
}

/// Counters accumulated over the integrator's lifetime. `attempts` counts
/// steps that reached the error test, so
/// `attempts = steps + error_test_failures`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunStats {
    pub steps: usize,
    pub attempts: usize,
    pub error_test_failures: usize,
    pub nonlinear_failures: usize,
    pub nonlinear_iterations: usize,
    pub linear_iterations: usize,
    pub linear_solves: usize,
    pub fe_evals: usize,
    pub fi_evals: usize,
}

impl RunStats {
    pub const CSV_HEADER: &'static str = "steps,attempts,error_test_failures,nonlinear_failures,\
nonlinear_iterations,linear_iterations,linear_solves,fe_evals,fi_evals";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.steps,
            self.attempts,
            self.error_test_failures,
            self.nonlinear_failures,
            self.nonlinear_iterations,
            self.linear_iterations,
            self.linear_solves,
            self.fe_evals,
            self.fi_evals
        )
    }

    fn absorb(&mut self, s: &SolveStats, linear: bool) {
        self.nonlinear_iterations += s.iterations;
        self.linear_iterations += s.inner_iterations;
        if linear {
            self.linear_solves += s.iterations;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub h: f64,
    pub accepted: bool,
    pub error: f64,
}

#[derive(Debug)]
pub enum StepOutcome {
    Accepted { h: f64, error: f64 },
    ErrorTestFailed { h: f64, error: f64 },
    /// A recoverable stage or right-hand-side failure; retry with smaller h.
    NonlinearFailure { h: f64, error: SolverError },
}

struct Counting<'a, R> {
    rhs: &'a mut R,
    fi_evals: usize,
}

impl<V: Vector, R: Rhs<V>> Rhs<V> for Counting<'_, R> {
    fn explicit(&mut self, t: f64, y: &V, f: &mut V) -> CbResult<()> {
        self.rhs.explicit(t, y, f)
    }
    fn implicit(&mut self, t: f64, y: &V, f: &mut V) -> CbResult<()> {
        self.fi_evals += 1;
        self.rhs.implicit(t, y, f)
    }
    fn parts(&self) -> Parts {
        self.rhs.parts()
    }
}

/// Adaptive additive Runge-Kutta integrator.
pub struct ArkStepper<V, R, S> {
    pair: ButcherPair,
    rhs: R,
    nls: S,
    tol: Tolerances<V>,
    opts: IntegratorOptions,
    t: f64,
    h_next: Option<f64>,
    y: V,
    ewt: V,
    fe: Vec<V>,
    fi: Vec<V>,
    z: V,
    d: V,
    y_new: V,
    err: V,
    stats: RunStats,
    eps_prev: f64,
    history: Vec<StepRecord>,
}

impl<V: Vector, R: Rhs<V>, S: StageSolver<V>> ArkStepper<V, R, S> {
    pub fn new(
        pair: ButcherPair,
        rhs: R,
        nls: S,
        t0: f64,
        y0: V,
        tol: Tolerances<V>,
        opts: IntegratorOptions,
    ) -> IResult<Self> {
        pair.validate()?;
        tol.validate()?;
        if opts.fixed_step.is_none() && pair.b_hat.is_none() {
            return Err(IntegratorError::InvalidTableau(
                "adaptive stepping needs embedded weights".into(),
            ));
        }
        let s = pair.stages();
        Ok(ArkStepper {
            rhs,
            nls,
            tol,
            opts,
            t: t0,
            h_next: None,
            ewt: y0.duplicate(),
            fe: (0..s).map(|_| y0.duplicate()).collect(),
            fi: (0..s).map(|_| y0.duplicate()).collect(),
            z: y0.duplicate(),
            d: y0.duplicate(),
            y_new: y0.duplicate(),
            err: y0.duplicate(),
            y: y0,
            stats: RunStats::default(),
            eps_prev: 1.0,
            history: Vec::new(),
            pair,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &V {
        &self.y
    }

    pub fn y_mut(&mut self) -> &mut V {
        &mut self.y
    }

    pub fn into_solution(self) -> V {
        self.y
    }

    /// Step size the next attempt will use, once known.
    pub fn next_step(&self) -> Option<f64> {
        self.h_next
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    pub fn history(&self) -> &[StepRecord] {
        &self.history
    }

    pub fn last_error(&self) -> f64 {
        self.eps_prev
    }

    pub fn pair(&self) -> &ButcherPair {
        &self.pair
    }

    pub fn rhs(&self) -> &R {
        &self.rhs
    }

    pub fn rhs_mut(&mut self) -> &mut R {
        &mut self.rhs
    }

    pub fn stage_solver(&self) -> &S {
        &self.nls
    }

    pub fn stage_solver_mut(&mut self) -> &mut S {
        &mut self.nls
    }

    fn rhs_error(&self, e: crate::solvers::CallbackError, h: f64) -> IResult<StepOutcome> {
        if e.recoverable {
            Ok(StepOutcome::NonlinearFailure {
                h,
                error: SolverError::ResidualCallbackFailure {
                    stats: SolveStats::default(),
                    source: e,
                },
            })
        } else {
            Err(IntegratorError::Rhs(e))
        }
    }

    /// `h0 = min(1e-3 |t_out − t|, 0.5 / ‖f(t, y)‖)` in the error-weighted norm.
    pub fn initial_step(&mut self, t_out: f64) -> IResult<f64> {
        let span = t_out - self.t;
        let mut h = 1e-3 * span.abs();
        ewt(&self.y, &self.tol, &mut self.ewt)?;
        let parts = self.rhs.parts();
        self.err.const_fill(0.0)?;
        if parts.explicit() {
            self.rhs.explicit(self.t, &self.y, &mut self.fe[0]).map_err(IntegratorError::Rhs)?;
            self.stats.fe_evals += 1;
            self.err.scale_add(1.0, 1.0, &self.fe[0])?;
        }
        if parts.implicit() {
            self.rhs.implicit(self.t, &self.y, &mut self.fi[0]).map_err(IntegratorError::Rhs)?;
            self.stats.fi_evals += 1;
            self.err.scale_add(1.0, 1.0, &self.fi[0])?;
        }
        let fnorm = self.err.wrms_norm(&self.ewt)?;
        if fnorm > 0.0 {
            h = h.min(0.5 / fnorm);
        }
        let h = self.opts.controller.bound(h).map_err(|_| IntegratorError::HMinReached { t: self.t, h })?;
        Ok(h.copysign(span))
    }

    /// Attempts one step of size `h` from the current state and commits it if
    /// the error test passes (always, in fixed-step mode).
    pub fn step(&mut self, h: f64) -> IResult<StepOutcome> {
        let s = self.pair.stages();
        let parts = self.rhs.parts();
        ewt(&self.y, &self.tol, &mut self.ewt)?;
        for i in 0..s {
            self.d.copy_from(&self.y)?;
            for j in 0..i {
                let ae = h * self.pair.explicit.a[i][j];
                if parts.explicit() && ae != 0.0 {
                    self.d.scale_add(1.0, ae, &self.fe[j])?;
                }
                let ai = h * self.pair.implicit.a[i][j];
                if parts.implicit() && ai != 0.0 {
                    self.d.scale_add(1.0, ai, &self.fi[j])?;
                }
            }
            let aii = self.pair.implicit.a[i][i];
            let ti = self.t + self.pair.implicit.c[i] * h;
            if parts.implicit() && aii != 0.0 {
                self.z.copy_from(&self.y)?;
                let stage = StageData {
                    t: ti,
                    gamma: h * aii,
                    d: &self.d,
                    ewt: &self.ewt,
                    tol: self.opts.tol_coef,
                };
                let mut counted = Counting {
                    rhs: &mut self.rhs,
                    fi_evals: 0,
                };
                let res = self.nls.solve(&mut counted, &stage, &mut self.z);
                self.stats.fi_evals += counted.fi_evals;
                let linear = self.nls.uses_linear_solver();
                match res {
                    Ok(st) => self.stats.absorb(&st, linear),
                    Err(e) => {
                        if let Some(st) = e.stats() {
                            self.stats.absorb(st, linear);
                        }
                        if e.recoverable() {
                            return Ok(StepOutcome::NonlinearFailure { h, error: e });
                        }
                        return Err(IntegratorError::Solver(e));
                    }
                }
            } else {
                self.z.copy_from(&self.d)?;
            }
            if parts.implicit() {
                self.stats.fi_evals += 1;
                if let Err(e) = self.rhs.implicit(ti, &self.z, &mut self.fi[i]) {
                    return self.rhs_error(e, h);
                }
            }
            if parts.explicit() {
                self.stats.fe_evals += 1;
                let te = self.t + self.pair.explicit.c[i] * h;
                if let Err(e) = self.rhs.explicit(te, &self.z, &mut self.fe[i]) {
                    return self.rhs_error(e, h);
                }
            }
        }

        self.y_new.copy_from(&self.y)?;
        self.err.const_fill(0.0)?;
        for i in 0..s {
            let (be, bi) = (self.pair.explicit.b[i], self.pair.implicit.b[i]);
            let bh = self.pair.b_hat.as_ref().map(|b| b[i]);
            if parts.explicit() {
                self.y_new.scale_add(1.0, h * be, &self.fe[i])?;
                if let Some(bh) = bh {
                    self.err.scale_add(1.0, h * (be - bh), &self.fe[i])?;
                }
            }
            if parts.implicit() {
                self.y_new.scale_add(1.0, h * bi, &self.fi[i])?;
                if let Some(bh) = bh {
                    self.err.scale_add(1.0, h * (bi - bh), &self.fi[i])?;
                }
            }
        }
        let eps = if self.pair.b_hat.is_some() {
            self.err.wrms_norm(&self.ewt)?
        } else {
            0.0
        };

        self.stats.attempts += 1;
        let accepted = self.opts.fixed_step.is_some() || eps <= 1.0;
        if self.opts.record_history {
            self.history.push(StepRecord {
                t: self.t,
                h,
                accepted,
                error: eps,
            });
        }
        if accepted {
            std::mem::swap(&mut self.y, &mut self.y_new);
            self.t += h;
            self.stats.steps += 1;
            self.eps_prev = eps;
            Ok(StepOutcome::Accepted { h, error: eps })
        } else {
            self.stats.error_test_failures += 1;
            Ok(StepOutcome::ErrorTestFailed { h, error: eps })
        }
    }

    /// Advances to exactly `t_out`, adapting the step size along the way.
    pub fn evolve(&mut self, t_out: f64) -> IResult<RunStats> {
        if t_out == self.t {
            return Ok(self.stats.clone());
        }
        let dir = (t_out - self.t).signum();
        let ctl = self.opts.controller;
        let p_hat = self.pair.embedded_order;
        let mut h = match (self.opts.fixed_step, self.h_next, self.opts.initial_step) {
            (Some(hf), _, _) => hf.abs() * dir,
            (None, Some(h), _) => h.abs() * dir,
            (None, None, Some(h0)) => h0.abs() * dir,
            (None, None, None) => self.initial_step(t_out)?,
        };
        let mut etf = 0;
        let mut ncf = 0;
        while (t_out - self.t) * dir > 0.0 {
            if self.stats.steps >= self.opts.max_steps {
                return Err(IntegratorError::TooManySteps(self.opts.max_steps));
            }
            let remaining = t_out - self.t;
            let landing = h.abs() >= remaining.abs() * (1.0 - 4.0 * f64::EPSILON);
            let h_try = if landing { remaining } else { h };
            match self.step(h_try)? {
                StepOutcome::Accepted { error, .. } => {
                    if landing {
                        self.t = t_out;
                    }
                    etf = 0;
                    ncf = 0;
                    if self.opts.fixed_step.is_none() {
                        h = ctl
                            .adapt(error, h_try, p_hat, true)
                            .map_err(|_| IntegratorError::HMinReached { t: self.t, h: h_try })?;
                    }
                }
                StepOutcome::ErrorTestFailed { error, .. } => {
                    etf += 1;
                    if etf > self.opts.max_error_failures {
                        return Err(IntegratorError::RepeatedErrorTestFailures { t: self.t, count: etf });
                    }
                    h = ctl
                        .adapt(error, h_try, p_hat, false)
                        .map_err(|_| IntegratorError::HMinReached { t: self.t, h: h_try })?;
                }
                StepOutcome::NonlinearFailure { error, .. } => {
                    self.stats.nonlinear_failures += 1;
                    ncf += 1;
                    if self.opts.fixed_step.is_some() {
                        return Err(IntegratorError::Solver(error));
                    }
                    if ncf > self.opts.max_nonlinear_failures {
                        return Err(IntegratorError::RepeatedNonlinearFailures { t: self.t, count: ncf });
                    }
                    h = ctl
                        .bound(h_try * ctl.eta_nonlinear_fail)
                        .map_err(|_| IntegratorError::HMinReached { t: self.t, h: h_try })?;
                }
            }
            self.h_next = Some(h);
        }
        Ok(self.stats.clone())
    }
}
