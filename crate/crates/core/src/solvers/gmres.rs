use super::{norm2, FailureReason, LinearOperator, SResult, SolveStats, SolverError};
use crate::nvector::Vector;

/// A second Gram-Schmidt pass runs when orthogonalization shrinks the new
/// direction's norm by more than this factor.
pub const REORTH_THRESHOLD: f64 = 1e-3;

/// Restarted, left-preconditioned GMRES with modified Gram-Schmidt.
/// Workspace is allocated once and reused across solves.
pub struct Gmres<V> {
    maxl: usize,
    max_restarts: usize,
    basis: Vec<V>,
    w: V,
    tmp: V,
    // Hessenberg stored by column: h[j][i].
    h: Vec<Vec<f64>>,
    cs: Vec<f64>,
    sn: Vec<f64>,
    g: Vec<f64>,
}

impl<V: Vector> Gmres<V> {
    pub fn new(template: &V, maxl: usize, max_restarts: usize) -> Self {
        assert!(maxl >= 1, "Krylov dimension must be at least 1");
        Gmres {
            maxl,
            max_restarts,
            basis: (0..=maxl).map(|_| template.duplicate()).collect(),
            w: template.duplicate(),
            tmp: template.duplicate(),
            h: vec![vec![0.0; maxl + 1]; maxl],
            cs: vec![0.0; maxl],
            sn: vec![0.0; maxl],
            g: vec![0.0; maxl + 1],
        }
    }

    pub fn maxl(&self) -> usize {
        self.maxl
    }

    /// `w ← P⁻¹ A v`.
    fn precond_apply<O: LinearOperator<V>>(op: &mut O, v: &V, w: &mut V, tmp: &mut V) -> super::CbResult<()> {
        if op.has_psolve() {
            op.apply(v, tmp)?;
            op.psolve(tmp, w)
        } else {
            op.apply(v, w)
        }
    }

    /// `basis[0] ← P⁻¹ (b − A x)`; returns its 2-norm.
    fn initial_residual<O: LinearOperator<V>>(&mut self, op: &mut O, b: &V, x: &V, stats: &SolveStats) -> SResult<f64> {
        let fail = |source| SolverError::OperatorFailure {
            stats: stats.clone().failed(FailureReason::Operator),
            source,
        };
        op.apply(x, &mut self.tmp).map_err(fail)?;
        self.w.linear_sum(1.0, b, -1.0, &self.tmp)?;
        if op.has_psolve() {
            op.psolve(&self.w, &mut self.basis[0]).map_err(fail)?;
        } else {
            self.basis[0].copy_from(&self.w)?;
        }
        Ok(norm2(&self.basis[0])?)
    }

    /// Solves `A x = b` starting from the contents of `x`.
    pub fn solve<O: LinearOperator<V>>(&mut self, op: &mut O, b: &V, x: &mut V, tol: f64) -> SResult<SolveStats> {
        let mut stats = SolveStats::default();
        let op_fail = |stats: &SolveStats, source| SolverError::OperatorFailure {
            stats: stats.clone().failed(FailureReason::Operator),
            source,
        };
        for _ in 0..=self.max_restarts {
            let beta = self.initial_residual(op, b, x, &stats)?;
            stats.residual_norm = beta;
            if beta <= tol {
                stats.converged = true;
                return Ok(stats);
            }
            self.basis[0].scale_in_place(1.0 / beta)?;
            self.g.fill(0.0);
            self.g[0] = beta;

            let mut k = 0;
            let mut broke_down = false;
            while k < self.maxl {
                let (head, tail) = self.basis.split_at_mut(k + 1);
                if let Err(e) = Self::precond_apply(op, &head[k], &mut self.w, &mut self.tmp) {
                    return Err(op_fail(&stats, e));
                }
                let before = norm2(&self.w)?;
                let col = &mut self.h[k];
                col.fill(0.0);
                for (i, vi) in head.iter().enumerate() {
                    let hik = self.w.dot(vi)?;
                    col[i] = hik;
                    self.w.scale_add(1.0, -hik, vi)?;
                }
                let mut after = norm2(&self.w)?;
                if after < REORTH_THRESHOLD * before {
                    for (i, vi) in head.iter().enumerate() {
                        let c = self.w.dot(vi)?;
                        col[i] += c;
                        self.w.scale_add(1.0, -c, vi)?;
                    }
                    after = norm2(&self.w)?;
                }
                col[k + 1] = after;

                for i in 0..k {
                    let (a, bq) = (col[i], col[i + 1]);
                    col[i] = self.cs[i] * a + self.sn[i] * bq;
                    col[i + 1] = -self.sn[i] * a + self.cs[i] * bq;
                }
                let (a, bq) = (col[k], col[k + 1]);
                let r = a.hypot(bq);
                let (c, s) = if r == 0.0 { (1.0, 0.0) } else { (a / r, bq / r) };
                self.cs[k] = c;
                self.sn[k] = s;
                col[k] = r;
                col[k + 1] = 0.0;
                self.g[k + 1] = -s * self.g[k];
                self.g[k] *= c;

                k += 1;
                stats.iterations += 1;
                stats.residual_norm = self.g[k].abs();
                if stats.residual_norm <= tol {
                    break;
                }
                if after == 0.0 {
                    broke_down = true;
                    break;
                }
                tail[0].copy_from(&self.w)?;
                tail[0].scale_in_place(1.0 / after)?;
            }

            self.update_solution(x, k)?;
            if stats.residual_norm <= tol {
                stats.converged = true;
                return Ok(stats);
            }
            if broke_down {
                return Err(SolverError::Breakdown(stats.failed(FailureReason::Breakdown)));
            }
        }
        Err(SolverError::MaxIterations(stats.failed(FailureReason::MaxIterations)))
    }

    /// Back-substitutes the rotated Hessenberg system and adds the correction.
    fn update_solution(&mut self, x: &mut V, k: usize) -> SResult<()> {
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = self.g[i];
            for (j, yj) in y.iter().enumerate().take(k).skip(i + 1) {
                s -= self.h[j][i] * yj;
            }
            y[i] = s / self.h[i][i];
        }
        for (i, yi) in y.iter().enumerate() {
            x.scale_add(1.0, *yi, &self.basis[i])?;
        }
        Ok(())
    }
}

/// One-shot GMRES solve with freshly allocated workspace.
pub fn gmres<V: Vector, O: LinearOperator<V>>(
    op: &mut O,
    b: &V,
    x: &mut V,
    tol: f64,
    maxl: usize,
    max_restarts: usize,
) -> SResult<SolveStats> {
    Gmres::new(b, maxl, max_restarts).solve(op, b, x, tol)
}
