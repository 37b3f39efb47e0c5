use super::{
    csr_product, dense_text, diagonal_positions, validate_pattern, MResult, MatrixError,
};
use crate::memory::{MemoryArbiter, MemoryBlock, MemorySpace};
use crate::nvector::LocalVector;

/// Compressed sparse row matrix. Values live in an arbiter block.
#[derive(Debug)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: MemoryBlock,
}

impl CsrMatrix {
    pub fn new(
        arbiter: &MemoryArbiter,
        space: MemorySpace,
        rows: usize,
        cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: &[f64],
    ) -> MResult<Self> {
        validate_pattern(rows, cols, &row_offsets, &col_indices)?;
        if values.len() != col_indices.len() {
            return Err(MatrixError::DimensionMismatch {
                expected: col_indices.len(),
                found: values.len(),
            });
        }
        let mut block = arbiter.alloc_f64(space, values.len());
        block.data_mut::<f64>()?.copy_from_slice(values);
        Ok(CsrMatrix {
            rows,
            cols,
            row_offsets,
            col_indices,
            values: block,
        })
    }

    pub fn identity(arbiter: &MemoryArbiter, n: usize) -> Self {
        Self::new(
            arbiter,
            MemorySpace::Host,
            n,
            n,
            (0..=n).collect(),
            (0..n).collect(),
            &vec![1.0; n],
        )
        .expect("identity pattern is valid")
    }

    /// Builds a matrix from row-major dense data, keeping entries that are
    /// nonzero or on the diagonal.
    pub fn from_dense(arbiter: &MemoryArbiter, rows: usize, cols: usize, dense: &[f64]) -> Self {
        assert_eq!(dense.len(), rows * cols);
        let mut offsets = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let a = dense[r * cols + c];
                if a != 0.0 || r == c {
                    indices.push(c);
                    values.push(a);
                }
            }
            offsets.push(indices.len());
        }
        Self::new(arbiter, MemorySpace::Host, rows, cols, offsets, indices, &values)
            .expect("pattern built from dense data is valid")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
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

    pub fn spmv(&self, x: &[f64], y: &mut [f64]) -> MResult<()> {
        if x.len() != self.cols {
            return Err(MatrixError::DimensionMismatch {
                expected: self.cols,
                found: x.len(),
            });
        }
        if y.len() != self.rows {
            return Err(MatrixError::DimensionMismatch {
                expected: self.rows,
                found: y.len(),
            });
        }
        csr_product(&self.row_offsets, &self.col_indices, self.values()?, x, y);
        Ok(())
    }

    /// `y = A x` on vectors, using their execution-space data.
    pub fn spmv_vec<V: LocalVector>(&self, x: &V, y: &mut V) -> MResult<()> {
        self.spmv(x.data()?, y.data_mut()?)
    }

    /// `A ← c A + I`.
    pub fn scale_add_identity(&mut self, c: f64) -> MResult<()> {
        if self.rows != self.cols {
            return Err(MatrixError::DimensionMismatch {
                expected: self.rows,
                found: self.cols,
            });
        }
        let diag = diagonal_positions(self.rows, &self.row_offsets, &self.col_indices)?;
        let v = self.values.data_mut::<f64>()?;
        for a in v.iter_mut() {
            *a *= c;
        }
        for k in diag {
            v[k] += 1.0;
        }
        Ok(())
    }

    pub fn zero(&mut self) -> MResult<()> {
        self.values.data_mut::<f64>()?.fill(0.0);
        Ok(())
    }

    pub fn to_dense(&self) -> MResult<Vec<f64>> {
        let mut d = vec![0.0; self.rows * self.cols];
        let v = self.values()?;
        for r in 0..self.rows {
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                d[r * self.cols + self.col_indices[k]] = v[k];
            }
        }
        Ok(d)
    }

    pub fn dense_dump(&self) -> MResult<String> {
        let d = self.to_dense()?;
        Ok(dense_text(self.rows, self.cols, |r, c| d[r * self.cols + c]))
    }

    pub fn try_clone(&self) -> MResult<Self> {
        let arbiter = self.values.arbiter().clone();
        let mut values = arbiter.alloc_f64(self.values.space(), self.values.len());
        arbiter.copy(&mut values, &self.values)?;
        Ok(CsrMatrix {
            rows: self.rows,
            cols: self.cols,
            row_offsets: self.row_offsets.clone(),
            col_indices: self.col_indices.clone(),
            values,
        })
    }
}

impl Clone for CsrMatrix {
    fn clone(&self) -> Self {
        self.try_clone().expect("cloning a live matrix")
    }
}
