//! Stage solvers for the implicit reaction terms.

use std::rc::Rc;

use sunbeam::integrator::{Rhs, StageData, StageLinearSolver, StageSolver, DEFAULT_MAX_NONLINEAR_ITERS};
use sunbeam::memory::MemoryArbiter;
use sunbeam::nvector::{LocalVector, Vector};
use sunbeam::solvers::{
    batched_factor, BatchedFactors, CallbackError, CbResult, FailureReason, Gmres, LinearOperator,
    SResult, SolveStats, SolverError,
};
use sunbeam::sunmatrix::BlockCsrMatrix;

use crate::field::Field;
use crate::physics::{newton_block, solve3x3, Reaction};
use crate::timing::{Category, Timers};

fn cell(q: &[f64], i: usize) -> [f64; 3] {
    [q[3 * i], q[3 * i + 1], q[3 * i + 2]]
}

/// Newton on all of a rank's cells at once. Each iteration solves the
/// block-diagonal system cell by cell; only the final success flag is
/// communicated.
pub struct TaskLocalSolver<V> {
    reaction: Reaction,
    timers: Rc<Timers>,
    pub max_iters: usize,
    blocks: Vec<[f64; 9]>,
    f: V,
    fi: V,
    delta: V,
    local_norms: usize,
    flags: usize,
}

impl<V: Field> TaskLocalSolver<V> {
    pub fn new(template: &V, reaction: Reaction, timers: Rc<Timers>) -> Self {
        TaskLocalSolver {
            reaction,
            timers,
            max_iters: DEFAULT_MAX_NONLINEAR_ITERS,
            blocks: Vec::new(),
            f: template.duplicate(),
            fi: template.duplicate(),
            delta: template.duplicate(),
            local_norms: 0,
            flags: 0,
        }
    }

    /// Rank-local norms computed so far (reductions without an allreduce).
    pub fn local_norms(&self) -> usize {
        self.local_norms
    }

    /// Success flags combined across ranks so far.
    pub fn flag_reductions(&self) -> usize {
        self.flags
    }

    fn residual<R: Rhs<V>>(&mut self, rhs: &mut R, st: &StageData<'_, V>, z: &V) -> CbResult<()> {
        rhs.implicit(st.t, z, &mut self.fi)?;
        self.f.linear_sum(1.0, z, -st.gamma, &self.fi)?;
        self.f.scale_add(1.0, -1.0, st.d)?;
        Ok(())
    }

    fn setup(&mut self, z: &V, gamma: f64) -> CbResult<()> {
        let q = z.cells()?;
        let r = self.reaction;
        self.blocks.clear();
        self.blocks
            .extend((0..q.len() / 3).map(|i| newton_block(&r, cell(q, i), gamma)));
        Ok(())
    }

    /// `δ_i = −M_i⁻¹ F_i` for every cell.
    fn direct_solve(&mut self) -> CbResult<()> {
        let f = self.f.cells()?;
        let out = self.delta.cells_mut()?;
        for (i, m) in self.blocks.iter().enumerate() {
            let r = cell(f, i);
            let x = solve3x3(m, &[-r[0], -r[1], -r[2]])
                .map_err(|_| CallbackError::recoverable(format!("singular Newton block at cell {i}")))?;
            out[3 * i..3 * i + 3].copy_from_slice(&x);
        }
        Ok(())
    }

    /// The local Newton loop. `Ok(true)` when converged on this rank.
    fn iterate<R: Rhs<V>>(
        &mut self,
        rhs: &mut R,
        st: &StageData<'_, V>,
        z: &mut V,
        stats: &mut SolveStats,
    ) -> CbResult<bool> {
        self.residual(rhs, st, z)?;
        let timers = Rc::clone(&self.timers);
        timers.time(Category::LinearSolve, || self.setup(z, st.gamma))?;
        while stats.iterations < self.max_iters {
            timers.time(Category::LinearSolve, || self.direct_solve())?;
            stats.inner_iterations += 1;
            z.scale_add(1.0, 1.0, &self.delta)?;
            stats.iterations += 1;
            let corr = self.delta.local_wrms(st.ewt)?;
            self.residual(rhs, st, z)?;
            let res = self.f.local_wrms(st.ewt)?;
            self.local_norms += 2;
            stats.residual_norm = corr.min(res);
            if corr < st.tol || res < st.tol {
                return Ok(true);
            }
            if !corr.is_finite() || !res.is_finite() {
                break;
            }
        }
        Ok(false)
    }
}

impl<V: Field> StageSolver<V> for TaskLocalSolver<V> {
    fn solve<R: Rhs<V>>(&mut self, rhs: &mut R, stage: &StageData<'_, V>, z: &mut V) -> SResult<SolveStats> {
        let mut stats = SolveStats::default();
        let local = self.iterate(rhs, stage, z, &mut stats);
        let ok = matches!(local, Ok(true));
        // Every rank takes part in the vote, whatever happened locally.
        self.flags += 1;
        let all = z.all_ranks(ok).map_err(|e| SolverError::ResidualCallbackFailure {
            stats: stats.clone(),
            source: CallbackError::fatal(e.to_string()),
        })?;
        if all {
            stats.converged = true;
            return Ok(stats);
        }
        stats.converged = false;
        match local {
            Err(source) if !source.recoverable => {
                stats.failure = Some(FailureReason::ResidualCallback);
                Err(SolverError::ResidualCallbackFailure { stats, source })
            }
            _ => {
                stats.failure = Some(FailureReason::MaxIterations);
                Err(SolverError::MaxIterations(stats))
            }
        }
    }
}

/// Per-cell Newton blocks `I − γ J_i` in block-CSR form.
fn fill_blocks<V: Field>(m: &mut BlockCsrMatrix, r: &Reaction, z: &V, gamma: f64) -> CbResult<()> {
    let q = z.cells()?;
    for i in 0..m.nblocks() {
        m.block_values_mut(i)
            .map_err(|e| CallbackError::fatal(e.to_string()))?
            .copy_from_slice(&newton_block(r, cell(q, i), gamma));
    }
    Ok(())
}

fn dense_blocks<V: Field>(arbiter: &MemoryArbiter, template: &V) -> BlockCsrMatrix {
    BlockCsrMatrix::dense_blocks(arbiter, template.node().space(), template.node().len() / 3, 3)
}

struct BlockOperator<'a> {
    m: &'a BlockCsrMatrix,
}

impl<V: Field> LinearOperator<V> for BlockOperator<'_> {
    fn apply(&mut self, x: &V, y: &mut V) -> CbResult<()> {
        self.m
            .spmv(x.cells()?, y.cells_mut()?)
            .map_err(|e| CallbackError::fatal(e.to_string()))
    }

    fn has_psolve(&self) -> bool {
        true
    }

    fn psolve(&mut self, r: &V, z: &mut V) -> CbResult<()> {
        let rv = r.cells()?;
        let out = z.cells_mut()?;
        for i in 0..self.m.nblocks() {
            let vals = self.m.block_values(i).map_err(|e| CallbackError::fatal(e.to_string()))?;
            let block: [f64; 9] = vals.try_into().expect("3x3 block");
            let x = solve3x3(&block, &cell(rv, i))
                .map_err(|_| CallbackError::recoverable(format!("singular preconditioner block {i}")))?;
            out[3 * i..3 * i + 3].copy_from_slice(&x);
        }
        Ok(())
    }
}

/// GMRES on `I − γ J` over the whole distributed system, preconditioned by
/// the per-cell 3×3 solves.
pub struct GlobalLinear<V> {
    reaction: Reaction,
    timers: Rc<Timers>,
    blocks: BlockCsrMatrix,
    gmres: Gmres<V>,
    /// GMRES stops once the preconditioned residual is below
    /// `rel_tol · ‖rhs‖₂`.
    pub rel_tol: f64,
    pub last: SolveStats,
}

impl<V: Field> GlobalLinear<V> {
    pub fn new(arbiter: &MemoryArbiter, template: &V, reaction: Reaction, timers: Rc<Timers>) -> Self {
        GlobalLinear {
            reaction,
            timers,
            blocks: dense_blocks(arbiter, template),
            gmres: Gmres::new(template, 5, 1),
            rel_tol: 1e-8,
            last: SolveStats::default(),
        }
    }
}

impl<V: Field> StageLinearSolver<V> for GlobalLinear<V> {
    fn setup(&mut self, _t: f64, z: &V, gamma: f64) -> CbResult<()> {
        let timers = Rc::clone(&self.timers);
        timers.time(Category::LinearSolve, || fill_blocks(&mut self.blocks, &self.reaction, z, gamma))
    }

    fn solve(&mut self, _t: f64, _z: &V, _gamma: f64, rhs: &V, delta: &mut V) -> CbResult<usize> {
        let timers = Rc::clone(&self.timers);
        timers.time(Category::LinearSolve, || {
            delta.const_fill(0.0)?;
            let tol = self.rel_tol * rhs.dot(rhs)?.sqrt();
            let mut op = BlockOperator { m: &self.blocks };
            let stats = self.gmres.solve(&mut op, rhs, delta, tol)?;
            let its = stats.iterations;
            self.last = stats;
            Ok(its)
        })
    }
}

/// Direct solves of the grouped block-diagonal system with batched LU.
pub struct BatchedLinear {
    reaction: Reaction,
    timers: Rc<Timers>,
    blocks: BlockCsrMatrix,
    factors: Option<BatchedFactors>,
}

impl BatchedLinear {
    pub fn new<V: Field>(arbiter: &MemoryArbiter, template: &V, reaction: Reaction, timers: Rc<Timers>) -> Self {
        BatchedLinear {
            reaction,
            timers,
            blocks: dense_blocks(arbiter, template),
            factors: None,
        }
    }
}

impl<V: Field> StageLinearSolver<V> for BatchedLinear {
    fn setup(&mut self, _t: f64, z: &V, gamma: f64) -> CbResult<()> {
        let timers = Rc::clone(&self.timers);
        timers.time(Category::LinearSolve, || {
            fill_blocks(&mut self.blocks, &self.reaction, z, gamma)?;
            self.factors = Some(batched_factor(&self.blocks)?);
            Ok(())
        })
    }

    fn solve(&mut self, _t: f64, _z: &V, _gamma: f64, rhs: &V, delta: &mut V) -> CbResult<usize> {
        let timers = Rc::clone(&self.timers);
        timers.time(Category::LinearSolve, || {
            let f = self
                .factors
                .as_ref()
                .ok_or_else(|| CallbackError::fatal("solve before setup"))?;
            f.solve(rhs.cells()?, delta.cells_mut()?)?;
            Ok(1)
        })
    }
}
