//! Many independent reaction cells grouped into block-diagonal systems, each
//! group integrated implicitly with batched direct solves. Groups can be
//! spread over several concurrent integrator instances.

use std::rc::Rc;
use std::time::Instant;

use sunbeam::integrator::{
    ArkStepper, ButcherPair, IntegratorOptions, NewtonStageSolver, RunStats, Tolerances,
};
use sunbeam::memory::{MemoryArbiter, TransferStats};
use sunbeam::nvector::{ExecContext, LocalVector, NodeVector};

use crate::config::ProblemConfig;
use crate::nls::BatchedLinear;
use crate::rhs::BrusselatorRhs;
use crate::timing::{Breakdown, Timers};
use crate::BrusselatorError;

#[derive(Debug, Clone)]
pub struct BatchConfig {
    /// Cell count (`nx`), initial profile, tolerances, backend and final
    /// time. Advection, ranks and solver kind are ignored.
    pub problem: ProblemConfig,
    /// Cells per grouped system.
    pub group: usize,
    /// Concurrent integrator instances.
    pub instances: usize,
}

#[derive(Debug, Clone)]
pub struct BatchReport {
    pub group: usize,
    pub instances: usize,
    /// Final `(u, v, w)` of every cell, in cell order.
    pub cells: Vec<[f64; 3]>,
    /// Integrator statistics per group, in group order.
    pub group_stats: Vec<RunStats>,
    /// Timing summed over groups.
    pub timing: Breakdown,
    pub transfers: TransferStats,
}

struct GroupResult {
    index: usize,
    values: Vec<f64>,
    stats: RunStats,
    timing: Breakdown,
}

/// Integrates one grouped system of interleaved cells.
pub fn integrate_group(
    cfg: &ProblemConfig,
    ctx: &ExecContext,
    values: &[f64],
    queue: u32,
) -> Result<(Vec<f64>, RunStats, Breakdown), BrusselatorError> {
    let mut cfg = cfg.clone();
    cfg.advection = false;
    cfg.reactions = true;
    let timers = Rc::new(Timers::default());
    let mut y0 = NodeVector::from_host(cfg.backend, ctx, values);
    y0.set_queue_id(queue);
    let linear = BatchedLinear::new(ctx.arbiter(), &y0, cfg.reaction, Rc::clone(&timers));
    let nls = NewtonStageSolver::new(&y0, linear);
    let rhs = BrusselatorRhs::new(&cfg, Rc::clone(&timers));
    let wrap = |source| BrusselatorError::Integrator { rank: queue as usize, source };
    let mut st = ArkStepper::new(
        ButcherPair::ark324(),
        rhs,
        nls,
        0.0,
        y0,
        Tolerances::scalar(cfg.rtol, cfg.atol),
        IntegratorOptions::default(),
    )
    .map_err(wrap)?;
    let start = Instant::now();
    let stats = st.evolve(cfg.tf).map_err(wrap)?;
    let timing = timers.breakdown(start.elapsed());
    let out = st.y_mut().to_host_vec()?;
    Ok((out, stats, timing))
}

pub fn run_batch(cfg: &BatchConfig) -> Result<BatchReport, BrusselatorError> {
    let p = &cfg.problem;
    if cfg.group == 0 || cfg.instances == 0 {
        return Err(BrusselatorError::Config("group size and instance count must be positive".into()));
    }
    if p.nx == 0 || p.workers == 0 {
        return Err(BrusselatorError::Config("nx and workers must be positive".into()));
    }
    let bump = p.bump();
    let initial: Vec<f64> = (0..p.nx)
        .flat_map(|i| crate::physics::initial_state(&p.reaction, &bump, p.x(i)))
        .collect();
    let groups: Vec<&[f64]> = initial.chunks(3 * cfg.group).collect();
    let arbiter = MemoryArbiter::new();

    let per_instance: Vec<Result<Vec<GroupResult>, BrusselatorError>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.instances)
            .map(|k| {
                let (groups, arbiter) = (&groups, arbiter.clone());
                s.spawn(move || {
                    let ctx = ExecContext::with_arbiter(arbiter, p.workers);
                    let mut done = Vec::new();
                    for index in (k..groups.len()).step_by(cfg.instances) {
                        let (values, stats, timing) = integrate_group(p, &ctx, groups[index], k as u32)?;
                        done.push(GroupResult { index, values, stats, timing });
                    }
                    Ok(done)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("batch instance panicked"))
            .collect()
    });

    let mut results = Vec::with_capacity(groups.len());
    for r in per_instance {
        results.extend(r?);
    }
    results.sort_by_key(|g| g.index);
    let mut timing = Breakdown::default();
    for g in &results {
        timing.advection += g.timing.advection;
        timing.reaction += g.timing.reaction;
        timing.linear_solve += g.timing.linear_solve;
        timing.other += g.timing.other;
        timing.total += g.timing.total;
    }
    Ok(BatchReport {
        group: cfg.group,
        instances: cfg.instances,
        cells: results
            .iter()
            .flat_map(|g| g.values.chunks_exact(3).map(|c| [c[0], c[1], c[2]]))
            .collect(),
        group_stats: results.into_iter().map(|g| g.stats).collect(),
        timing,
        transfers: arbiter.stats(),
    })
}
