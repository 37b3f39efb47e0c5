use std::rc::Rc;
use std::time::Instant;

use sunbeam::distvec::{make_dist, run_ranks, CommHandle, Communicator};
use sunbeam::integrator::{
    ArkStepper, ButcherPair, IntegratorOptions, NewtonStageSolver, RunStats, StageSolver, StepRecord,
    Tolerances,
};
use sunbeam::memory::{MemoryArbiter, TransferStats};
use sunbeam::nvector::{ExecContext, LocalVector, NodeVector};

use crate::config::{ProblemConfig, SolverKind};
use crate::field::Field;
use crate::nls::{GlobalLinear, TaskLocalSolver};
use crate::report::RunReport;
use crate::rhs::BrusselatorRhs;
use crate::timing::{Breakdown, Timers};
use crate::BrusselatorError;

/// What one rank brings back from its integration.
pub(crate) struct RankOutcome {
    pub stats: RunStats,
    pub history: Vec<StepRecord>,
    pub solution: Vec<f64>,
    pub timing: Breakdown,
    pub reductions: u64,
    pub local_norms: u64,
    pub flags: u64,
    pub exchanges: u64,
}

/// Evolves `y0` to `cfg.tf` with the configured stage solver.
pub(crate) fn integrate<V: Field>(
    cfg: &ProblemConfig,
    arbiter: &MemoryArbiter,
    ctx: &ExecContext,
    y0: V,
    rank: usize,
) -> Result<RankOutcome, BrusselatorError> {
    let timers = Rc::new(Timers::default());
    let rhs = BrusselatorRhs::new(cfg, Rc::clone(&timers));
    let before = ctx.counters().reductions();
    match cfg.solver {
        SolverKind::TaskLocal => {
            let nls = TaskLocalSolver::new(&y0, cfg.reaction, Rc::clone(&timers));
            let (mut out, st) = evolve(cfg, rhs, nls, y0, &timers, rank)?;
            out.local_norms = st.stage_solver().local_norms() as u64;
            out.flags = st.stage_solver().flag_reductions() as u64;
            out.reductions = ctx.counters().reductions() - before;
            Ok(out)
        }
        SolverKind::Global => {
            let linear = GlobalLinear::new(arbiter, &y0, cfg.reaction, Rc::clone(&timers));
            let nls = NewtonStageSolver::new(&y0, linear);
            let (mut out, _) = evolve(cfg, rhs, nls, y0, &timers, rank)?;
            out.reductions = ctx.counters().reductions() - before;
            Ok(out)
        }
    }
}

type Stepper<V, S> = ArkStepper<V, BrusselatorRhs, S>;

fn evolve<V: Field, S: StageSolver<V>>(
    cfg: &ProblemConfig,
    rhs: BrusselatorRhs,
    nls: S,
    y0: V,
    timers: &Timers,
    rank: usize,
) -> Result<(RankOutcome, Stepper<V, S>), BrusselatorError> {
    let opts = IntegratorOptions {
        record_history: cfg.record_history,
        ..Default::default()
    };
    let tol = Tolerances::scalar(cfg.rtol, cfg.atol);
    let wrap = |source| BrusselatorError::Integrator { rank, source };
    let mut st = ArkStepper::new(ButcherPair::ark324(), rhs, nls, 0.0, y0, tol, opts).map_err(wrap)?;
    let start = Instant::now();
    let stats = st.evolve(cfg.tf).map_err(wrap)?;
    let timing = timers.breakdown(start.elapsed());
    let solution = st.y_mut().node_mut().to_host_vec()?;
    let out = RankOutcome {
        stats,
        history: st.history().to_vec(),
        solution,
        timing,
        reductions: 0,
        local_norms: 0,
        flags: 0,
        exchanges: st.rhs().exchanges() as u64,
    };
    Ok((out, st))
}

fn local_vector(cfg: &ProblemConfig, ctx: &ExecContext, rank: usize) -> Result<NodeVector, BrusselatorError> {
    let mut v = NodeVector::from_host(cfg.backend, ctx, &cfg.initial_values(rank));
    if let Some((s, r)) = cfg.exec_policies() {
        v.set_exec_policy(s, r)?;
    }
    v.set_queue_id(rank as u32);
    Ok(v)
}

fn report(
    cfg: &ProblemConfig,
    mut outs: Vec<RankOutcome>,
    transfers: TransferStats,
    comm: Option<&Communicator>,
) -> RunReport {
    let solution = outs.iter().flat_map(|o| o.solution.iter().copied()).collect();
    let first = outs.swap_remove(0);
    RunReport {
        solver: cfg.solver.name().into(),
        backend: cfg.backend.name().into(),
        ranks: cfg.ranks,
        nx: cfg.nx,
        stats: first.stats,
        timing: first.timing,
        transfers,
        reductions: first.reductions,
        local_norms: first.local_norms,
        flag_reductions: first.flags,
        allreduces: comm.map_or(0, |c| c.counters().allreduces()),
        messages: comm.map_or(0, |c| c.counters().messages()),
        halo_exchanges: first.exchanges,
        history: first.history,
        solution,
    }
}

/// Full run over `cfg.ranks` simulated ranks with distributed vectors.
pub fn run(cfg: &ProblemConfig) -> Result<RunReport, BrusselatorError> {
    cfg.validate()?;
    let arbiter = MemoryArbiter::new();
    let comm = Communicator::new(cfg.ranks);
    let results = run_ranks(&comm, |h: CommHandle| {
        let rank = h.rank();
        let ctx = ExecContext::with_arbiter(arbiter.clone(), cfg.workers);
        let y0 = make_dist(h, local_vector(cfg, &ctx, rank)?)?;
        integrate(cfg, &arbiter, &ctx, y0, rank)
    });
    let outs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(report(cfg, outs, arbiter.stats(), Some(&comm)))
}

/// The same problem on one node-local vector, without the distributed layer.
pub fn run_node_local(cfg: &ProblemConfig) -> Result<RunReport, BrusselatorError> {
    cfg.validate()?;
    if cfg.ranks != 1 {
        return Err(BrusselatorError::Config("node-local runs use a single rank".into()));
    }
    let arbiter = MemoryArbiter::new();
    let ctx = ExecContext::with_arbiter(arbiter.clone(), cfg.workers);
    let y0 = local_vector(cfg, &ctx, 0)?;
    let out = integrate(cfg, &arbiter, &ctx, y0, 0)?;
    Ok(report(cfg, vec![out], arbiter.stats(), None))
}
