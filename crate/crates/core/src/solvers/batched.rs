use super::{SResult, SolverError};
use crate::sunmatrix::BlockCsrMatrix;

/// A pivot is treated as zero when it is this small relative to the largest
/// entry of its block.
const PIVOT_TOLERANCE: f64 = 1e-14;

/// Row-pivoted LU factors of every block of a block-diagonal matrix.
#[derive(Debug, Clone)]
pub struct BatchedFactors {
    nblocks: usize,
    m: usize,
    // Packed L (unit lower, below the diagonal) and U, row-major per block.
    lu: Vec<f64>,
    pivots: Vec<usize>,
}

/// Factors each block independently; fails with the index of the first
/// singular block.
pub fn batched_factor(a: &BlockCsrMatrix) -> SResult<BatchedFactors> {
    let (g, m) = (a.nblocks(), a.block_dim());
    let mut lu = Vec::with_capacity(g * m * m);
    let mut pivots = Vec::with_capacity(g * m);
    for j in 0..g {
        let mut block = a.block_dense(j).map_err(|_| SolverError::SingularBlock(j))?;
        let mut piv = vec![0; m];
        factor_block(&mut block, m, &mut piv).map_err(|_| SolverError::SingularBlock(j))?;
        lu.extend_from_slice(&block);
        pivots.extend_from_slice(&piv);
    }
    Ok(BatchedFactors {
        nblocks: g,
        m,
        lu,
        pivots,
    })
}

/// In-place partial-pivoting LU of one row-major `m × m` block.
fn factor_block(a: &mut [f64], m: usize, piv: &mut [usize]) -> Result<(), ()> {
    let scale = a.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    if scale == 0.0 && m > 0 {
        return Err(());
    }
    for k in 0..m {
        let p = (k..m)
            .max_by(|&r, &s| a[r * m + k].abs().total_cmp(&a[s * m + k].abs()))
            .expect("non-empty pivot range");
        piv[k] = p;
        if !(a[p * m + k].abs() > PIVOT_TOLERANCE * scale) {
            return Err(());
        }
        if p != k {
            for c in 0..m {
                a.swap(k * m + c, p * m + c);
            }
        }
        let d = a[k * m + k];
        for r in k + 1..m {
            let l = a[r * m + k] / d;
            a[r * m + k] = l;
            for c in k + 1..m {
                a[r * m + c] -= l * a[k * m + c];
            }
        }
    }
    Ok(())
}

impl BatchedFactors {
    pub fn nblocks(&self) -> usize {
        self.nblocks
    }

    pub fn block_dim(&self) -> usize {
        self.m
    }

    /// Packed factors of block `j`: unit-lower `L` below the diagonal and `U`
    /// on and above it.
    pub fn block_factors(&self, j: usize) -> &[f64] {
        let mm = self.m * self.m;
        &self.lu[j * mm..(j + 1) * mm]
    }

    /// Row interchanges of block `j`: at step `k` row `k` was swapped with
    /// row `pivots[k]`.
    pub fn block_pivots(&self, j: usize) -> &[usize] {
        &self.pivots[j * self.m..(j + 1) * self.m]
    }

    /// Solves every block system in place.
    pub fn solve_in_place(&self, x: &mut [f64]) -> SResult<()> {
        let m = self.m;
        if x.len() != self.nblocks * m {
            return Err(SolverError::DimensionMismatch {
                expected: self.nblocks * m,
                found: x.len(),
            });
        }
        for (j, xb) in x.chunks_exact_mut(m.max(1)).enumerate().take(self.nblocks) {
            let a = self.block_factors(j);
            for (k, &p) in self.block_pivots(j).iter().enumerate() {
                xb.swap(k, p);
            }
            for r in 1..m {
                let mut s = xb[r];
                for c in 0..r {
                    s -= a[r * m + c] * xb[c];
                }
                xb[r] = s;
            }
            for r in (0..m).rev() {
                let mut s = xb[r];
                for c in r + 1..m {
                    s -= a[r * m + c] * xb[c];
                }
                xb[r] = s / a[r * m + r];
            }
        }
        Ok(())
    }

    pub fn solve(&self, b: &[f64], x: &mut [f64]) -> SResult<()> {
        if b.len() != x.len() {
            return Err(SolverError::DimensionMismatch {
                expected: b.len(),
                found: x.len(),
            });
        }
        x.copy_from_slice(b);
        self.solve_in_place(x)
    }
}
