use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sunbeam::distvec::{make_dist, run_ranks, Communicator};
use sunbeam::integrator::{Parts, Rhs, StageData, StageSolver};
use sunbeam::nvector::{Backend, ExecContext, LocalVector, NodeVector, Vector};
use sunbeam::solvers::{batched_factor, CbResult, Newton, NonlinearSystem};
use sunbeam::sunmatrix::BlockCsrMatrix;
use sunbeam::memory::{MemoryArbiter, MemorySpace};
use sunbeam_brusselator::nls::TaskLocalSolver;
use sunbeam_brusselator::physics::{reaction, reaction_jacobian, solve3x3, Reaction};
use sunbeam_brusselator::rhs::BrusselatorRhs;
use sunbeam_brusselator::timing::Category;
use sunbeam_brusselator::{run, run_batch, run_node_local, BatchConfig, ProblemConfig, SolverKind};

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs() / y.abs().max(1e-300)))
}

fn small(solver: SolverKind) -> ProblemConfig {
    ProblemConfig {
        nx: 64,
        tf: 0.01,
        solver,
        ..Default::default()
    }
}

fn rhs_for(cfg: &ProblemConfig) -> BrusselatorRhs {
    BrusselatorRhs::new(cfg, Default::default())
}

#[test]
fn advection_examples() {
    let ctx = ExecContext::new(1);
    let cfg = ProblemConfig {
        nx: 4,
        domain: 1.0,
        ..Default::default()
    };
    let rhs = rhs_for(&cfg);
    let y = NodeVector::from_host(Backend::Serial, &ctx, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let mut f = y.duplicate();
    rhs.advection(&y, &mut f).unwrap();
    let fu: Vec<f64> = f.data().unwrap().iter().step_by(3).copied().collect();
    let k = 0.01 / 0.25;
    assert_eq!(fu, vec![0.0, -k, k, 0.0]);
    assert!((k - 0.04).abs() < 1e-17);
    assert_eq!(rhs.exchanges(), 1);

    let flat = NodeVector::from_host(Backend::Serial, &ctx, &[1.0, 3.5, 3.0].repeat(4));
    rhs.advection(&flat, &mut f).unwrap();
    assert!(f.data().unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn advection_is_rank_count_invariant() {
    let cfg = ProblemConfig { nx: 48, ..Default::default() };
    let ctx = ExecContext::new(1);
    let global: Vec<f64> = {
        let y = NodeVector::from_host(Backend::Serial, &ctx, &cfg.initial_values(0));
        let mut f = y.duplicate();
        rhs_for(&cfg).advection(&y, &mut f).unwrap();
        f.data().unwrap().to_vec()
    };
    for r in [1, 2, 4] {
        let c = ProblemConfig { ranks: r, ..cfg.clone() };
        let comm = Communicator::new(r);
        let parts = run_ranks(&comm, |h| {
            let rank = h.rank();
            let y = make_dist(h, NodeVector::from_host(Backend::DeviceSim, &ctx, &c.initial_values(rank))).unwrap();
            let mut f = y.duplicate();
            rhs_for(&c).advection(&y, &mut f).unwrap();
            f.local().data().unwrap().to_vec()
        });
        let joined: Vec<f64> = parts.concat();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&joined), bits(&global), "R={r}");
    }
}

#[test]
fn reactions_match_independent_evaluator() {
    let r = Reaction::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let (u, v, w): (f64, f64, f64) = (rng.gen_range(0.0..3.0), rng.gen_range(0.0..5.0), rng.gen_range(0.0..5.0));
        let fu = 1.0 - (w + 1.0) * u + v * u * u;
        let fv = w * u - v * u * u;
        let fw = (3.5 - w) / 5e-6 - w * u;
        assert_eq!(reaction(&r, [u, v, w]), [fu, fv, fw]);
    }
}

/// Central differences of the reaction terms, step `1e-6·max(1, |y|)`.
fn fd_jacobian(r: &Reaction, y: [f64; 3]) -> [f64; 9] {
    let mut j = [0.0; 9];
    for c in 0..3 {
        let h = 1e-6 * y[c].abs().max(1.0);
        let (mut p, mut m) = (y, y);
        p[c] += h;
        m[c] -= h;
        let (fp, fm) = (reaction(r, p), reaction(r, m));
        for row in 0..3 {
            j[row * 3 + c] = (fp[row] - fm[row]) / (2.0 * h);
        }
    }
    j
}

#[test]
fn jacobian_matches_finite_differences() {
    let r = Reaction::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let y = [rng.gen_range(0.1..3.0), rng.gen_range(0.1..5.0), rng.gen_range(0.1..5.0)];
        let (a, fd) = (reaction_jacobian(&r, y), fd_jacobian(&r, y));
        for k in 0..9 {
            // The stiff w row carries entries near 1/eps; its difference quotients
            // lose digits in proportion, so errors are taken against the row scale.
            let row = &a[k / 3 * 3..k / 3 * 3 + 3];
            let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!((a[k] - fd[k]).abs() / scale <= 1e-6, "entry {k}: {} vs {}", a[k], fd[k]);
        }
    }
}

fn lu_solve(a: &[f64; 9], b: &[f64; 3]) -> [f64; 3] {
    let arb = MemoryArbiter::new();
    let mut m = BlockCsrMatrix::dense_blocks(&arb, MemorySpace::Host, 1, 3);
    m.set_block_dense(0, a).unwrap();
    let mut x = [0.0; 3];
    batched_factor(&m).unwrap().solve(b, &mut x).unwrap();
    x
}

#[test]
fn solve3x3_against_lu() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let mut m = [0.0; 9];
        for (k, e) in m.iter_mut().enumerate() {
            *e = rng.gen_range(-1.0..1.0) + if k % 4 == 0 { 3.0 } else { 0.0 };
        }
        let b = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let (x, o) = (solve3x3(&m, &b).unwrap(), lu_solve(&m, &b));
        assert!(x.iter().zip(&o).all(|(p, q)| (p - q).abs() <= 1e-10));
    }
}

/// The stage residual of one cell, for the library Newton oracle.
struct CellStage<'a> {
    rhs: BrusselatorRhs,
    d: &'a NodeVector,
    gamma: f64,
    m: BlockCsrMatrix,
    f: Option<sunbeam::solvers::BatchedFactors>,
}

impl NonlinearSystem<NodeVector> for CellStage<'_> {
    fn residual(&mut self, z: &NodeVector, out: &mut NodeVector) -> CbResult<()> {
        let mut fi = z.duplicate();
        self.rhs.reactions(z, &mut fi)?;
        out.linear_sum(1.0, z, -self.gamma, &fi)?;
        out.scale_add(1.0, -1.0, self.d)?;
        Ok(())
    }
    fn setup(&mut self, z: &NodeVector, _f: &NodeVector) -> CbResult<()> {
        let q = z.data()?;
        let b = sunbeam_brusselator::physics::newton_block(&self.rhs.reaction, [q[0], q[1], q[2]], self.gamma);
        self.m.set_block_dense(0, &b).unwrap();
        self.f = Some(batched_factor(&self.m)?);
        Ok(())
    }
    fn solve(&mut self, _z: &NodeVector, rhs: &NodeVector, delta: &mut NodeVector) -> CbResult<usize> {
        self.f.as_ref().unwrap().solve(rhs.data()?, delta.data_mut()?)?;
        Ok(1)
    }
}

#[test]
fn task_local_matches_library_newton_on_one_cell() {
    let ctx = ExecContext::new(1);
    let cfg = ProblemConfig { nx: 1, ..Default::default() };
    let d = NodeVector::from_host(Backend::Serial, &ctx, &[1.2, 3.1, 3.3]);
    let ewt = NodeVector::from_host(Backend::Serial, &ctx, &[1e6; 3]);
    let gamma = 0.05;

    let mut rhs = rhs_for(&cfg);
    let mut z = d.duplicate();
    z.copy_from(&d).unwrap();
    let mut tl = TaskLocalSolver::new(&z, cfg.reaction, Default::default());
    let stage = StageData { t: 0.0, gamma, d: &d, ewt: &ewt, tol: 1e-14 };
    tl.max_iters = 8;
    let _ = tl.solve(&mut rhs, &stage, &mut z);

    let mut oracle = d.duplicate();
    oracle.copy_from(&d).unwrap();
    let arb = MemoryArbiter::new();
    let mut sys = CellStage {
        rhs: rhs_for(&cfg),
        d: &d,
        gamma,
        m: BlockCsrMatrix::dense_blocks(&arb, MemorySpace::Host, 1, 3),
        f: None,
    };
    let _ = Newton::new(&oracle, 1e-14, 8).solve(&mut sys, &mut oracle, &ewt);
    let (a, b) = (z.data().unwrap(), oracle.data().unwrap());
    assert!(a.iter().zip(b).all(|(p, q)| (p - q).abs() <= 1e-14), "{a:?} vs {b:?}");
}

#[test]
fn task_local_linear_stage_in_one_iteration() {
    let ctx = ExecContext::new(1);
    let cfg = ProblemConfig { nx: 2, ..Default::default() };
    let d = NodeVector::from_host(Backend::Serial, &ctx, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let ewt = NodeVector::from_host(Backend::Serial, &ctx, &[1.0; 6]);
    let mut z = NodeVector::from_host(Backend::Serial, &ctx, &[9.0; 6]);
    let mut tl = TaskLocalSolver::new(&z, cfg.reaction, Default::default());
    let stage = StageData { t: 0.0, gamma: 0.0, d: &d, ewt: &ewt, tol: 0.1 };
    let s = tl.solve(&mut rhs_for(&cfg), &stage, &mut z).unwrap();
    assert_eq!(s.iterations, 1);
    assert_eq!(z.data().unwrap(), d.data().unwrap());
}

/// One rank sees a stage it cannot solve in the iteration budget.
struct Stiff(BrusselatorRhs, usize);

impl Rhs<sunbeam::distvec::DistVector<NodeVector>> for Stiff {
    fn explicit(&mut self, _: f64, _: &sunbeam::distvec::DistVector<NodeVector>, f: &mut sunbeam::distvec::DistVector<NodeVector>) -> CbResult<()> {
        Ok(f.const_fill(0.0)?)
    }
    fn implicit(&mut self, t: f64, y: &sunbeam::distvec::DistVector<NodeVector>, f: &mut sunbeam::distvec::DistVector<NodeVector>) -> CbResult<()> {
        if y.rank() == self.1 {
            // Inconsistent with the Jacobian, so Newton cannot converge.
            let q = y.local().data()?.to_vec();
            for (o, v) in f.local_mut().data_mut()?.iter_mut().zip(&q) {
                *o = 1e3 * v.sin() * v.exp();
            }
            Ok(())
        } else {
            self.0.implicit(t, y, f)
        }
    }
    fn parts(&self) -> Parts {
        Parts::ImplicitOnly
    }
}

#[test]
fn one_failing_rank_fails_every_rank() {
    let cfg = ProblemConfig { nx: 8, ranks: 4, ..Default::default() };
    let ctx = ExecContext::new(1);
    let comm = Communicator::new(4);
    let outcomes = run_ranks(&comm, |h| {
        let rank = h.rank();
        let d = make_dist(h, NodeVector::from_host(Backend::Serial, &ctx, &cfg.initial_values(rank))).unwrap();
        let ewt = {
            let mut w = d.duplicate();
            w.const_fill(1e6).unwrap();
            w
        };
        let mut z = d.duplicate();
        z.copy_from(&d).unwrap();
        let mut tl = TaskLocalSolver::new(&z, cfg.reaction, Default::default());
        let stage = StageData { t: 0.0, gamma: 0.1, d: &d, ewt: &ewt, tol: 0.1 };
        let res = tl.solve(&mut Stiff(rhs_for(&cfg), 2), &stage, &mut z);
        res.map(|_| ()).map_err(|e| e.recoverable())
    });
    assert!(outcomes.iter().all(|o| *o == Err(true)), "{outcomes:?}");
}

#[test]
fn smoke_runs_report_categories() {
    for solver in [SolverKind::TaskLocal, SolverKind::Global] {
        let rep = run(&small(solver)).unwrap();
        assert!(rep.stats.steps > 0);
        assert!(rep.timing.categorized() <= rep.timing.total + std::time::Duration::from_micros(1));
        for c in Category::ALL {
            assert!(rep.to_csv().contains(c.name()));
        }
        assert_eq!(rep.to_csv().lines().count(), 6);
        assert_eq!(rep.solution.len(), 3 * 64);
        let dump = rep.solution_dump(&small(solver));
        assert_eq!(dump.lines().count(), 65);
        assert!(dump.starts_with("x,u,v,w\n0,"));
    }
}

#[test]
fn global_solver_examples() {
    // Reaction only: the block preconditioner is exact.
    let cfg = ProblemConfig { advection: false, ..small(SolverKind::Global) };
    let rep = run(&cfg).unwrap();
    assert_eq!(rep.stats.linear_iterations, rep.stats.linear_solves);
}

#[test]
fn constant_state_is_preserved() {
    for backend in [Backend::Serial, Backend::Pooled, Backend::DeviceSim] {
        for ranks in [1, 2, 4] {
            let cfg = ProblemConfig {
                nx: 32,
                ranks,
                alpha: 0.0,
                reactions: false,
                backend,
                tf: 0.5,
                ..Default::default()
            };
            let rep = run(&cfg).unwrap();
            assert!(rep.solution.chunks(3).all(|c| c == [1.0, 3.5, 3.0]));
        }
    }
}

#[test]
fn devsim_moves_arrays_only_at_the_ends() {
    for solver in [SolverKind::TaskLocal, SolverKind::Global] {
        let cfg = ProblemConfig { backend: Backend::DeviceSim, ranks: 2, ..small(solver) };
        let rep = run(&cfg).unwrap();
        assert_eq!(rep.htod_copies(), 2);
        assert_eq!(rep.dtoh_copies(), 2);
        assert_eq!(rep.transfers.total_copies(), 4 + rep.transfers.scalar_transfer_count);
    }
}

#[test]
fn rank_counts_agree() {
    let base = ProblemConfig { backend: Backend::Pooled, workers: 2, ..small(SolverKind::TaskLocal) };
    let one = run(&base).unwrap();
    for r in [2, 4] {
        let rep = run(&ProblemConfig { ranks: r, ..base.clone() }).unwrap();
        assert!(max_rel(&rep.solution, &one.solution) <= 10.0 * base.rtol);
    }
}

#[test]
fn single_rank_matches_node_local() {
    let cfg = ProblemConfig { record_history: true, ..small(SolverKind::TaskLocal) };
    let (a, b) = (run(&cfg).unwrap(), run_node_local(&cfg).unwrap());
    assert_eq!(a.accepted_steps(), b.accepted_steps());
    assert_eq!(a.solution, b.solution);
}

#[test]
fn batch_examples() {
    let p = ProblemConfig { nx: 32, tf: 0.1, ..Default::default() };
    let g1 = run_batch(&BatchConfig { problem: p.clone(), group: 1, instances: 1 }).unwrap();
    let g16 = run_batch(&BatchConfig { problem: p.clone(), group: 16, instances: 1 }).unwrap();
    let g16k4 = run_batch(&BatchConfig { problem: p.clone(), group: 16, instances: 4 }).unwrap();
    let g1k4 = run_batch(&BatchConfig { problem: p.clone(), group: 1, instances: 4 }).unwrap();
    assert_eq!(g1.cells, g1k4.cells);
    assert_eq!(g16.cells, g16k4.cells);
    let flat = |c: &[[f64; 3]]| c.concat();
    assert!(max_rel(&flat(&g16.cells), &flat(&g1.cells)) <= 10.0 * p.rtol);

    let same = ProblemConfig { alpha: 0.0, ..p };
    let r = run_batch(&BatchConfig { problem: same, group: 16, instances: 1 }).unwrap();
    assert!(r.cells.iter().all(|c| *c == r.cells[0]));
}

#[test]
fn config_rejections() {
    assert!(ProblemConfig { nx: 10, ranks: 3, ..Default::default() }.validate().is_err());
    assert!(ProblemConfig { speed: -0.01, ..Default::default() }.validate().is_err());
    assert!(ProblemConfig { domain: 0.0, ..Default::default() }.validate().is_err());
    assert!(run_node_local(&ProblemConfig { ranks: 2, ..Default::default() }).is_err());
}
