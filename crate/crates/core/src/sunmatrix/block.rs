use std::sync::Arc;

use super::{
    csr_product, dense_text, diagonal_positions, validate_pattern, CsrMatrix, MResult,
    MatrixError,
};
use crate::memory::{MemoryArbiter, MemoryBlock, MemorySpace};
use crate::nvector::LocalVector;

#[derive(Debug)]
struct Pattern {
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    diagonal: Vec<usize>,
}

/// Block-diagonal matrix of `G` square `m × m` blocks that all share one CSR
/// pattern. Only one copy of the index arrays exists, shared by clones too;
/// values are stored block after block.
#[derive(Debug)]
pub struct BlockCsrMatrix {
    nblocks: usize,
    m: usize,
    pattern: Arc<Pattern>,
    values: MemoryBlock,
}

impl BlockCsrMatrix {
    /// Zero-valued matrix with the given block pattern.
    pub fn new(
        arbiter: &MemoryArbiter,
        space: MemorySpace,
        nblocks: usize,
        m: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
    ) -> MResult<Self> {
        if nblocks == 0 {
            return Err(MatrixError::InvalidStructure("need at least one block".into()));
        }
        validate_pattern(m, m, &row_offsets, &col_indices)?;
        let diagonal = diagonal_positions(m, &row_offsets, &col_indices).unwrap_or_default();
        let values = arbiter.alloc_f64(space, nblocks * col_indices.len());
        Ok(BlockCsrMatrix {
            nblocks,
            m,
            pattern: Arc::new(Pattern {
                row_offsets,
                col_indices,
                diagonal,
            }),
            values,
        })
    }

    /// Every block fully dense.
    pub fn dense_blocks(arbiter: &MemoryArbiter, space: MemorySpace, nblocks: usize, m: usize) -> Self {
        let offsets = (0..=m).map(|r| r * m).collect();
        let indices = (0..m * m).map(|k| k % m).collect();
        Self::new(arbiter, space, nblocks, m, offsets, indices).expect("dense pattern is valid")
    }

    pub fn nblocks(&self) -> usize {
        self.nblocks
    }

    pub fn block_dim(&self) -> usize {
        self.m
    }

    pub fn block_nnz(&self) -> usize {
        self.pattern.col_indices.len()
    }

    /// Global dimension `G · m`.
    pub fn dim(&self) -> usize {
        self.nblocks * self.m
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.pattern.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.pattern.col_indices
    }

    /// Number of integers held by the index arrays.
    pub fn index_storage_len(&self) -> usize {
        self.pattern.row_offsets.len() + self.pattern.col_indices.len()
    }

    pub fn value_storage_len(&self) -> usize {
        self.values.len()
    }

    pub fn space(&self) -> MemorySpace {
        self.values.space()
    }

    pub fn values(&self) -> MResult<&[f64]> {
        Ok(self.values.data()?)
    }

    pub fn values_mut(&mut self) -> MResult<&mut [f64]> {
        Ok(self.values.data_mut()?)
    }

    fn check_block(&self, j: usize) -> MResult<std::ops::Range<usize>> {
        if j >= self.nblocks {
            return Err(MatrixError::IndexOutOfRange {
                index: j,
                len: self.nblocks,
            });
        }
        let nnz = self.block_nnz();
        Ok(j * nnz..(j + 1) * nnz)
    }

    pub fn block_values(&self, j: usize) -> MResult<&[f64]> {
        let r = self.check_block(j)?;
        Ok(&self.values()?[r])
    }

    pub fn block_values_mut(&mut self, j: usize) -> MResult<&mut [f64]> {
        let r = self.check_block(j)?;
        Ok(&mut self.values_mut()?[r])
    }

    /// Overwrites block `j` from row-major dense data. Entries outside the
    /// pattern are ignored.
    pub fn set_block_dense(&mut self, j: usize, dense: &[f64]) -> MResult<()> {
        let m = self.m;
        if dense.len() != m * m {
            return Err(MatrixError::DimensionMismatch {
                expected: m * m,
                found: dense.len(),
            });
        }
        let pattern = Arc::clone(&self.pattern);
        let vals = self.block_values_mut(j)?;
        for r in 0..m {
            for k in pattern.row_offsets[r]..pattern.row_offsets[r + 1] {
                vals[k] = dense[r * m + pattern.col_indices[k]];
            }
        }
        Ok(())
    }

    /// Block `j` as row-major dense data.
    pub fn block_dense(&self, j: usize) -> MResult<Vec<f64>> {
        let m = self.m;
        let vals = self.block_values(j)?;
        let mut d = vec![0.0; m * m];
        for r in 0..m {
            for k in self.pattern.row_offsets[r]..self.pattern.row_offsets[r + 1] {
                d[r * m + self.pattern.col_indices[k]] = vals[k];
            }
        }
        Ok(d)
    }

    pub fn spmv(&self, x: &[f64], y: &mut [f64]) -> MResult<()> {
        let n = self.dim();
        for len in [x.len(), y.len()] {
            if len != n {
                return Err(MatrixError::DimensionMismatch { expected: n, found: len });
            }
        }
        let (m, nnz) = (self.m, self.block_nnz());
        let vals = self.values()?;
        let p = &self.pattern;
        for j in 0..self.nblocks {
            csr_product(
                &p.row_offsets,
                &p.col_indices,
                &vals[j * nnz..(j + 1) * nnz],
                &x[j * m..(j + 1) * m],
                &mut y[j * m..(j + 1) * m],
            );
        }
        Ok(())
    }

    pub fn spmv_vec<V: LocalVector>(&self, x: &V, y: &mut V) -> MResult<()> {
        self.spmv(x.data()?, y.data_mut()?)
    }

    /// `A ← c A + I` on every block.
    pub fn scale_add_identity(&mut self, c: f64) -> MResult<()> {
        if self.pattern.diagonal.len() != self.m {
            let missing = (0..self.m)
                .find(|&r| {
                    let p = &self.pattern;
                    p.col_indices[p.row_offsets[r]..p.row_offsets[r + 1]]
                        .binary_search(&r)
                        .is_err()
                })
                .unwrap_or(0);
            return Err(MatrixError::MissingDiagonal(missing));
        }
        let nnz = self.block_nnz();
        let pattern = Arc::clone(&self.pattern);
        let vals = self.values_mut()?;
        for a in vals.iter_mut() {
            *a *= c;
        }
        for block in vals.chunks_exact_mut(nnz.max(1)) {
            for &k in &pattern.diagonal {
                block[k] += 1.0;
            }
        }
        Ok(())
    }

    pub fn zero(&mut self) -> MResult<()> {
        self.values_mut()?.fill(0.0);
        Ok(())
    }

    /// Explicit block-diagonal assembly as a plain CSR matrix.
    pub fn to_csr(&self, arbiter: &MemoryArbiter) -> MResult<CsrMatrix> {
        let (m, nnz) = (self.m, self.block_nnz());
        let p = &self.pattern;
        let mut offsets = Vec::with_capacity(self.dim() + 1);
        let mut indices = Vec::with_capacity(self.nblocks * nnz);
        offsets.push(0);
        for j in 0..self.nblocks {
            for r in 0..m {
                for k in p.row_offsets[r]..p.row_offsets[r + 1] {
                    indices.push(j * m + p.col_indices[k]);
                }
                offsets.push(indices.len());
            }
        }
        CsrMatrix::new(
            arbiter,
            self.space(),
            self.dim(),
            self.dim(),
            offsets,
            indices,
            self.values()?,
        )
    }

    pub fn dense_dump(&self) -> MResult<String> {
        let m = self.m;
        let blocks: Vec<Vec<f64>> =
            (0..self.nblocks).map(|j| self.block_dense(j)).collect::<MResult<_>>()?;
        Ok(dense_text(self.dim(), self.dim(), |r, c| {
            if r / m == c / m {
                blocks[r / m][(r % m) * m + c % m]
            } else {
                0.0
            }
        }))
    }

    pub fn try_clone(&self) -> MResult<Self> {
        let arbiter = self.values.arbiter().clone();
        let mut values = arbiter.alloc_f64(self.values.space(), self.values.len());
        arbiter.copy(&mut values, &self.values)?;
        Ok(BlockCsrMatrix {
            nblocks: self.nblocks,
            m: self.m,
            pattern: Arc::clone(&self.pattern),
            values,
        })
    }
}

impl Clone for BlockCsrMatrix {
    fn clone(&self) -> Self {
        self.try_clone().expect("cloning a live matrix")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_blocks(g: usize, m: usize) -> BlockCsrMatrix {
        let arb = MemoryArbiter::new();
        let mut a = BlockCsrMatrix::dense_blocks(&arb, MemorySpace::Host, g, m);
        a.scale_add_identity(0.0).unwrap();
        a
    }

    #[test]
    fn identity_blocks_preserve_input() {
        let a = identity_blocks(2, 2);
        let x = [1.0, 2.0, 3.0, 4.0];
        let mut y = [0.0; 4];
        a.spmv(&x, &mut y).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn index_storage_independent_of_block_count() {
        let a = identity_blocks(1, 3);
        let b = identity_blocks(64, 3);
        assert_eq!(a.index_storage_len(), b.index_storage_len());
        assert_eq!(b.value_storage_len(), 64 * b.block_nnz());
    }

    #[test]
    fn block_view_bounds() {
        let a = identity_blocks(3, 2);
        assert_eq!(a.block_values(2).unwrap().len(), a.block_nnz());
        assert!(matches!(
            a.block_values(3),
            Err(MatrixError::IndexOutOfRange { index: 3, len: 3 })
        ));
    }

    #[test]
    fn zero_then_spmv() {
        let mut a = identity_blocks(2, 3);
        a.zero().unwrap();
        let mut y = [1.0; 6];
        a.spmv(&[1.0; 6], &mut y).unwrap();
        assert_eq!(y, [0.0; 6]);
    }

    #[test]
    fn clone_shares_pattern_not_values() {
        let a = identity_blocks(2, 2);
        let mut b = a.clone();
        b.block_values_mut(1).unwrap()[0] = 5.0;
        assert_eq!(a.block_values(1).unwrap()[0], 1.0);
        assert!(Arc::ptr_eq(&a.pattern, &b.pattern));
    }

    #[test]
    fn missing_diagonal_reported() {
        let arb = MemoryArbiter::new();
        let mut a =
            BlockCsrMatrix::new(&arb, MemorySpace::Host, 2, 2, vec![0, 1, 2], vec![0, 0]).unwrap();
        assert!(matches!(a.scale_add_identity(1.0), Err(MatrixError::MissingDiagonal(1))));
    }
}
