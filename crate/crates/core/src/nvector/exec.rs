//! Kernel launch machinery shared by the pooled and device-simulated backends.

use std::sync::Arc;

use rayon::prelude::*;

use super::ExecPolicy;

/// Below this length kernels run inline on the calling thread. The partition
/// (and therefore every result bit) is unchanged.
const INLINE_LIMIT: usize = 4096;

/// Leaves of the reduction tree are folded left-to-right.
const TREE_LEAF: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Combine {
    Sum,
    Max,
    Min,
}

impl Combine {
    #[inline]
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Combine::Sum => a + b,
            Combine::Max => a.max(b),
            Combine::Min => a.min(b),
        }
    }

    fn identity(self) -> f64 {
        match self {
            Combine::Sum => 0.0,
            Combine::Max => f64::NEG_INFINITY,
            Combine::Min => f64::INFINITY,
        }
    }
}

/// Shared worker pool.
#[derive(Clone)]
pub struct WorkerPool {
    pool: Arc<rayon::ThreadPool>,
}

impl std::fmt::Debug for WorkerPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "WorkerPool({} threads)", self.threads())
    }
}

impl WorkerPool {
    pub fn new(threads: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .thread_name(|i| format!("sunbeam-worker-{i}"))
            .build()
            .expect("failed to start worker pool");
        Self { pool: Arc::new(pool) }
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

struct SyncPtr(*mut f64);
// SAFETY: only used to hand disjoint indices of one slice to distinct workers.
unsafe impl Send for SyncPtr {}
unsafe impl Sync for SyncPtr {}

/// How a backend executes kernels.
#[derive(Debug, Clone)]
pub(crate) enum Exec {
    /// Left-to-right loop, left-fold reductions.
    Serial,
    Parallel {
        pool: WorkerPool,
        streaming: ExecPolicy,
        reduction: ExecPolicy,
    },
}

impl Exec {
    pub(crate) fn parallel(pool: WorkerPool) -> Self {
        let w = pool.threads();
        Exec::Parallel {
            pool,
            streaming: ExecPolicy::ThreadDirect { workers: w },
            reduction: ExecPolicy::BlockReduce { block_size: 256 },
        }
    }

    pub(crate) fn set_policies(&mut self, s: ExecPolicy, r: ExecPolicy) {
        if let Exec::Parallel {
            streaming,
            reduction,
            ..
        } = self
        {
            *streaming = s;
            *reduction = r;
        }
    }

    pub(crate) fn policies(&self) -> Option<(ExecPolicy, ExecPolicy)> {
        match self {
            Exec::Serial => None,
            Exec::Parallel {
                streaming,
                reduction,
                ..
            } => Some((*streaming, *reduction)),
        }
    }

    /// `out[i] = f(i, out[i])` for every `i`.
    pub(crate) fn map<F>(&self, out: &mut [f64], f: F)
    where
        F: Fn(usize, f64) -> f64 + Sync + Send,
    {
        let n = out.len();
        match self {
            Exec::Serial => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = f(i, *o);
                }
            }
            Exec::Parallel {
                pool, streaming, ..
            } => match *streaming {
                ExecPolicy::GridStride { workers } => {
                    let ptr = SyncPtr(out.as_mut_ptr());
                    let lane = |k: usize| {
                        let p = &ptr;
                        let mut i = k;
                        while i < n {
                            // SAFETY: lanes k = 0..workers visit disjoint index sets.
                            unsafe {
                                let slot = p.0.add(i);
                                *slot = f(i, *slot);
                            }
                            i += workers;
                        }
                    };
                    if n < INLINE_LIMIT {
                        (0..workers).for_each(lane);
                    } else {
                        pool.pool.install(|| (0..workers).into_par_iter().for_each(lane));
                    }
                }
                policy => {
                    let size = match policy {
                        ExecPolicy::ThreadDirect { workers } => n.div_ceil(workers).max(1),
                        ExecPolicy::BlockReduce { block_size } => block_size,
                        ExecPolicy::GridStride { .. } => unreachable!(),
                    };
                    let chunk = |(c, part): (usize, &mut [f64])| {
                        let base = c * size;
                        for (j, o) in part.iter_mut().enumerate() {
                            *o = f(base + j, *o);
                        }
                    };
                    if n < INLINE_LIMIT {
                        out.chunks_mut(size).enumerate().for_each(chunk);
                    } else {
                        pool.pool
                            .install(|| out.par_chunks_mut(size).enumerate().for_each(chunk));
                    }
                }
            },
        }
    }

    /// Reduces `term(0) ... term(n-1)`. Serial: left fold from the identity.
    /// Parallel: a balanced tree inside each policy partition, then a left
    /// fold of the partition partials.
    pub(crate) fn reduce<F>(&self, n: usize, op: Combine, term: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        match self {
            Exec::Serial => (0..n).fold(op.identity(), |acc, i| op.apply(acc, term(i))),
            Exec::Parallel {
                pool, reduction, ..
            } => {
                let partials: Vec<f64> = match *reduction {
                    ExecPolicy::GridStride { workers } => {
                        let lanes = workers.min(n);
                        let lane = |k: usize| {
                            let m = (n - k).div_ceil(workers);
                            tree(0, m, op, &|j| term(k + j * workers))
                        };
                        if n < INLINE_LIMIT {
                            (0..lanes).map(lane).collect()
                        } else {
                            pool.pool.install(|| (0..lanes).into_par_iter().map(lane).collect())
                        }
                    }
                    policy => {
                        let ranges = policy.chunks(n).expect("contiguous policy");
                        let part = |r: &std::ops::Range<usize>| tree(r.start, r.end, op, &term);
                        if n < INLINE_LIMIT {
                            ranges.iter().map(part).collect()
                        } else {
                            pool.pool.install(|| ranges.par_iter().map(part).collect())
                        }
                    }
                };
                match partials.split_first() {
                    None => op.identity(),
                    Some((first, rest)) => rest.iter().fold(*first, |acc, &p| op.apply(acc, p)),
                }
            }
        }
    }
}

fn tree<F: Fn(usize) -> f64>(lo: usize, hi: usize, op: Combine, term: &F) -> f64 {
    if hi <= lo {
        return op.identity();
    }
    if hi - lo <= TREE_LEAF {
        let mut acc = term(lo);
        for i in lo + 1..hi {
            acc = op.apply(acc, term(i));
        }
        return acc;
    }
    let mid = lo + (hi - lo) / 2;
    op.apply(tree(lo, mid, op, term), tree(mid, hi, op, term))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thread_direct_chunking() {
        let p = ExecPolicy::ThreadDirect { workers: 4 };
        let chunks = p.chunks(10).unwrap();
        assert_eq!(chunks, vec![0..3, 3..6, 6..9, 9..10]);
    }

    #[test]
    fn grid_stride_covers_every_element_once() {
        let exec = Exec::Parallel {
            pool: WorkerPool::new(2),
            streaming: ExecPolicy::GridStride { workers: 3 },
            reduction: ExecPolicy::GridStride { workers: 3 },
        };
        for n in [0, 1, 2, 7, 5000] {
            let mut out = vec![0.0; n];
            exec.map(&mut out, |i, old| old + i as f64);
            assert!(out.iter().enumerate().all(|(i, v)| *v == i as f64));
            let s = exec.reduce(n, Combine::Sum, |i| i as f64);
            assert_eq!(s, (n * n.saturating_sub(1) / 2) as f64);
        }
    }

    #[test]
    fn reduction_of_empty_is_identity() {
        let exec = Exec::parallel(WorkerPool::new(1));
        assert_eq!(exec.reduce(0, Combine::Sum, |_| 1.0), 0.0);
        assert_eq!(exec.reduce(0, Combine::Max, |_| 1.0), f64::NEG_INFINITY);
    }
}
