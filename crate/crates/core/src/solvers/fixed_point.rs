use std::collections::VecDeque;

use super::{CbResult, FailureReason, SResult, SolveStats, SolverError};
use crate::nvector::Vector;

/// Largest supported Anderson depth.
pub const MAX_ANDERSON_DEPTH: usize = 5;

/// Columns of the difference matrix whose remaining norm falls below this
/// fraction of the largest are dropped from the least-squares problem.
const RANK_TOLERANCE: f64 = 1e-12;

/// Fixed point iteration `y ← g(y)` with optional Anderson acceleration over
/// the last `depth` residual differences.
pub struct FixedPoint<V> {
    pub tol: f64,
    pub max_iters: usize,
    depth: usize,
    g_cur: V,
    f_cur: V,
    y_new: V,
    g_new: V,
    f_new: V,
    delta: V,
    // (ΔF, ΔG) pairs, oldest first.
    history: VecDeque<(V, V)>,
    spare: Vec<(V, V)>,
    q: Vec<V>,
}

impl<V: Vector> FixedPoint<V> {
    pub fn new(template: &V, depth: usize, tol: f64, max_iters: usize) -> Self {
        let depth = depth.min(MAX_ANDERSON_DEPTH);
        FixedPoint {
            tol,
            max_iters,
            depth,
            g_cur: template.duplicate(),
            f_cur: template.duplicate(),
            y_new: template.duplicate(),
            g_new: template.duplicate(),
            f_new: template.duplicate(),
            delta: template.duplicate(),
            history: VecDeque::with_capacity(depth),
            spare: (0..depth).map(|_| (template.duplicate(), template.duplicate())).collect(),
            q: (0..depth).map(|_| template.duplicate()).collect(),
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn solve<G>(&mut self, g: &mut G, y: &mut V, ewt: &V) -> SResult<SolveStats>
    where
        G: FnMut(&V, &mut V) -> CbResult<()>,
    {
        let mut stats = SolveStats::default();
        let cb_fail = |stats: &SolveStats, source| SolverError::ResidualCallbackFailure {
            stats: stats.clone().failed(FailureReason::ResidualCallback),
            source,
        };
        while let Some(pair) = self.history.pop_front() {
            self.spare.push(pair);
        }

        g(y, &mut self.g_cur).map_err(|e| cb_fail(&stats, e))?;
        self.f_cur.linear_sum(1.0, &self.g_cur, -1.0, y)?;
        while stats.iterations < self.max_iters {
            if self.history.is_empty() {
                self.y_new.copy_from(&self.g_cur)?;
            } else {
                let gamma = self.least_squares()?;
                self.y_new.copy_from(&self.g_cur)?;
                for (gi, (_, dg)) in gamma.iter().zip(&self.history) {
                    self.y_new.scale_add(1.0, -gi, dg)?;
                }
            }
            stats.iterations += 1;

            g(&self.y_new, &mut self.g_new).map_err(|e| cb_fail(&stats, e))?;
            self.f_new.linear_sum(1.0, &self.g_new, -1.0, &self.y_new)?;
            self.delta.linear_sum(1.0, &self.y_new, -1.0, y)?;
            let corr = self.delta.wrms_norm(ewt)?;
            let res = self.f_new.wrms_norm(ewt)?;

            if self.depth > 0 {
                let (mut df, mut dg) = if self.history.len() == self.depth {
                    self.history.pop_front().expect("full history")
                } else {
                    self.spare.pop().expect("spare history slot")
                };
                df.linear_sum(1.0, &self.f_new, -1.0, &self.f_cur)?;
                dg.linear_sum(1.0, &self.g_new, -1.0, &self.g_cur)?;
                self.history.push_back((df, dg));
            }
            y.copy_from(&self.y_new)?;
            std::mem::swap(&mut self.g_cur, &mut self.g_new);
            std::mem::swap(&mut self.f_cur, &mut self.f_new);

            stats.residual_norm = corr.min(res);
            if corr < self.tol || res < self.tol {
                stats.converged = true;
                return Ok(stats);
            }
            if !corr.is_finite() {
                break;
            }
        }
        Err(SolverError::MaxIterations(stats.failed(FailureReason::MaxIterations)))
    }

    /// Coefficients minimizing `‖f_cur − ΔF γ‖₂`, via modified Gram-Schmidt
    /// with column pivoting.
    fn least_squares(&mut self) -> SResult<Vec<f64>> {
        let mk = self.history.len();
        for (q, (df, _)) in self.q.iter_mut().zip(&self.history) {
            q.copy_from(df)?;
        }
        let mut perm: Vec<usize> = (0..mk).collect();
        let mut r = vec![vec![0.0; mk]; mk];
        let mut rank = 0;
        let mut largest = 0.0;
        for i in 0..mk {
            let mut best = (i, -1.0);
            for j in i..mk {
                let n2 = self.q[j].dot(&self.q[j])?;
                if n2 > best.1 {
                    best = (j, n2);
                }
            }
            let (jmax, n2) = best;
            if jmax != i {
                self.q.swap(i, jmax);
                perm.swap(i, jmax);
                for row in r.iter_mut().take(i) {
                    row.swap(i, jmax);
                }
            }
            let nrm = n2.sqrt();
            if i == 0 {
                largest = nrm;
            }
            if !(nrm > RANK_TOLERANCE * largest) || nrm == 0.0 {
                break;
            }
            r[i][i] = nrm;
            self.q[i].scale_in_place(1.0 / nrm)?;
            rank = i + 1;
            let (head, tail) = self.q.split_at_mut(i + 1);
            for (off, qj) in tail[..mk - i - 1].iter_mut().enumerate() {
                let rij = head[i].dot(qj)?;
                r[i][i + 1 + off] = rij;
                qj.scale_add(1.0, -rij, &head[i])?;
            }
        }
        let mut c = vec![0.0; rank];
        for (i, ci) in c.iter_mut().enumerate() {
            *ci = self.q[i].dot(&self.f_cur)?;
        }
        for i in (0..rank).rev() {
            let mut s = c[i];
            for j in i + 1..rank {
                s -= r[i][j] * c[j];
            }
            c[i] = s / r[i][i];
        }
        let mut gamma = vec![0.0; mk];
        for (i, ci) in c.into_iter().enumerate() {
            gamma[perm[i]] = ci;
        }
        Ok(gamma)
    }
}

pub fn fixed_point<V, G>(
    g: &mut G,
    y: &mut V,
    ewt: &V,
    depth: usize,
    tol: f64,
    max_iters: usize,
) -> SResult<SolveStats>
where
    V: Vector,
    G: FnMut(&V, &mut V) -> CbResult<()>,
{
    FixedPoint::new(y, depth, tol, max_iters).solve(g, y, ewt)
}
