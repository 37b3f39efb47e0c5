//! Sparse matrices: plain CSR and a block-diagonal CSR whose blocks share one
//! sparsity pattern.

mod block;
mod csr;

pub use block::BlockCsrMatrix;
pub use csr::CsrMatrix;

use thiserror::Error;

use crate::memory::MemoryError;
use crate::nvector::VectorError;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("row {0} has no diagonal entry in the sparsity pattern")]
    MissingDiagonal(usize),
    #[error("index {index} out of range for {len} entries")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid structure: {0}")]
    InvalidStructure(String),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Vector(#[from] VectorError),
}

pub type MResult<T> = Result<T, MatrixError>;

/// Checks CSR index arrays for a `rows × cols` matrix.
fn validate_pattern(rows: usize, cols: usize, offsets: &[usize], indices: &[usize]) -> MResult<()> {
    if offsets.len() != rows + 1 {
        return Err(MatrixError::InvalidStructure(format!(
            "row_offsets has {} entries, expected {}",
            offsets.len(),
            rows + 1
        )));
    }
    if offsets[0] != 0 || offsets[rows] != indices.len() {
        return Err(MatrixError::InvalidStructure(
            "row_offsets must start at 0 and end at nnz".into(),
        ));
    }
    for r in 0..rows {
        let (lo, hi) = (offsets[r], offsets[r + 1]);
        if hi < lo {
            return Err(MatrixError::InvalidStructure(format!("row_offsets decrease at row {r}")));
        }
        let row = &indices[lo..hi];
        if row.iter().any(|&c| c >= cols) {
            return Err(MatrixError::InvalidStructure(format!("column out of range in row {r}")));
        }
        if row.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MatrixError::InvalidStructure(format!(
                "columns not strictly increasing in row {r}"
            )));
        }
    }
    Ok(())
}

/// Position of each diagonal entry within the values of one pattern.
fn diagonal_positions(rows: usize, offsets: &[usize], indices: &[usize]) -> MResult<Vec<usize>> {
    (0..rows)
        .map(|r| {
            let lo = offsets[r];
            indices[lo..offsets[r + 1]]
                .binary_search(&r)
                .map(|k| lo + k)
                .map_err(|_| MatrixError::MissingDiagonal(r))
        })
        .collect()
}

/// Row-wise product in ascending column order.
fn csr_product(offsets: &[usize], indices: &[usize], values: &[f64], x: &[f64], y: &mut [f64]) {
    for (r, yr) in y.iter_mut().enumerate() {
        let mut acc = 0.0;
        for k in offsets[r]..offsets[r + 1] {
            acc += values[k] * x[indices[k]];
        }
        *yr = acc;
    }
}

fn dense_text(rows: usize, cols: usize, entry: impl Fn(usize, usize) -> f64) -> String {
    let mut s = String::new();
    for r in 0..rows {
        let line: Vec<String> = (0..cols).map(|c| format!("{:>12.5e}", entry(r, c))).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}
