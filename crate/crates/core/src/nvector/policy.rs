use std::ops::Range;

use super::VectorError;

/// How vector elements are mapped onto workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecPolicy {
    /// Contiguous chunks of `ceil(n / workers)` elements per worker.
    ThreadDirect { workers: usize },
    /// Worker `k` handles elements `k, k + workers, k + 2 * workers, ...`.
    GridStride { workers: usize },
    /// Reduction-only: block partials over `block_size` contiguous elements.
    BlockReduce { block_size: usize },
}

impl ExecPolicy {
    pub fn validate(self) -> Result<Self, VectorError> {
        let ok = match self {
            ExecPolicy::ThreadDirect { workers } | ExecPolicy::GridStride { workers } => workers >= 1,
            ExecPolicy::BlockReduce { block_size } => block_size >= 1,
        };
        if ok {
            Ok(self)
        } else {
            Err(VectorError::InvalidPolicy(format!("{self:?} needs a positive size")))
        }
    }

    pub fn validate_streaming(self) -> Result<Self, VectorError> {
        if let ExecPolicy::BlockReduce { .. } = self {
            return Err(VectorError::InvalidPolicy(
                "BlockReduce is a reduction policy".to_string(),
            ));
        }
        self.validate()
    }

    /// Contiguous chunks used by `ThreadDirect` and `BlockReduce`. `None` for
    /// `GridStride`, which is not contiguous.
    pub fn chunks(self, n: usize) -> Option<Vec<Range<usize>>> {
        let size = match self {
            ExecPolicy::ThreadDirect { workers } => n.div_ceil(workers).max(1),
            ExecPolicy::BlockReduce { block_size } => block_size,
            ExecPolicy::GridStride { .. } => return None,
        };
        Some((0..n).step_by(size).map(|s| s..(s + size).min(n)).collect())
    }
}
