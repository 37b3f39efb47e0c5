use super::{norm2, FailureReason, LinearOperator, SResult, SolveStats, SolverError};
use crate::nvector::Vector;

/// Preconditioned conjugate gradients for symmetric positive definite
/// operators. Convergence is tested on the unpreconditioned residual 2-norm.
pub struct Pcg<V> {
    maxl: usize,
    r: V,
    z: V,
    p: V,
    q: V,
}

impl<V: Vector> Pcg<V> {
    pub fn new(template: &V, maxl: usize) -> Self {
        Pcg {
            maxl,
            r: template.duplicate(),
            z: template.duplicate(),
            p: template.duplicate(),
            q: template.duplicate(),
        }
    }

    pub fn solve<O: LinearOperator<V>>(&mut self, op: &mut O, b: &V, x: &mut V, tol: f64) -> SResult<SolveStats> {
        let mut stats = SolveStats::default();
        macro_rules! call {
            ($e:expr) => {
                $e.map_err(|source| SolverError::OperatorFailure {
                    stats: stats.clone().failed(FailureReason::Operator),
                    source,
                })?
            };
        }
        call!(op.apply(x, &mut self.q));
        self.r.linear_sum(1.0, b, -1.0, &self.q)?;
        stats.residual_norm = norm2(&self.r)?;
        if stats.residual_norm <= tol {
            stats.converged = true;
            return Ok(stats);
        }
        call!(op.psolve(&self.r, &mut self.z));
        self.p.copy_from(&self.z)?;
        let mut rz = self.r.dot(&self.z)?;
        while stats.iterations < self.maxl {
            call!(op.apply(&self.p, &mut self.q));
            let pq = self.p.dot(&self.q)?;
            if !(pq > 0.0) {
                return Err(SolverError::Breakdown(stats.failed(FailureReason::Breakdown)));
            }
            let alpha = rz / pq;
            x.scale_add(1.0, alpha, &self.p)?;
            self.r.scale_add(1.0, -alpha, &self.q)?;
            stats.iterations += 1;
            stats.residual_norm = norm2(&self.r)?;
            if stats.residual_norm <= tol {
                stats.converged = true;
                return Ok(stats);
            }
            call!(op.psolve(&self.r, &mut self.z));
            let rz_new = self.r.dot(&self.z)?;
            if rz == 0.0 {
                return Err(SolverError::Breakdown(stats.failed(FailureReason::Breakdown)));
            }
            let beta = rz_new / rz;
            rz = rz_new;
            // p = z + beta p
            self.p.scale_add(beta, 1.0, &self.z)?;
        }
        Err(SolverError::MaxIterations(stats.failed(FailureReason::MaxIterations)))
    }
}

pub fn pcg<V: Vector, O: LinearOperator<V>>(op: &mut O, b: &V, x: &mut V, tol: f64, maxl: usize) -> SResult<SolveStats> {
    Pcg::new(b, maxl).solve(op, b, x, tol)
}
