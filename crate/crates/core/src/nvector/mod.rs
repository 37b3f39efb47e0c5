//! The abstract vector operation set and its node-local backends.
//!
//! Integrators and solvers are written against [`Vector`] only. Node-local
//! backends additionally implement [`LocalVector`], which exposes where the
//! data lives and how kernels are launched:
//!
//! * [`SerialVector`]: single-thread loops over host memory.
//! * [`PooledVector`]: host memory, kernels split across a worker pool.
//! * [`DeviceSimVector`]: data resident in the device arena. Host views
//!   require an explicit [`LocalVector::copy_from_space`], and every
//!   reduction returns its scalar through a counted one-element transfer.
//!
//! [`NodeVector`] selects one of the three at run time.

mod devsim;
mod exec;
mod node;
mod pooled;
mod policy;
mod serial;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use thiserror::Error;

use crate::distvec::CommError;
use crate::memory::{MemoryArbiter, MemoryError, MemorySpace};

pub use devsim::DeviceSimVector;
pub use exec::WorkerPool;
pub use node::{Backend, NodeVector};
pub use policy::ExecPolicy;
pub use pooled::PooledVector;
pub use serial::SerialVector;

pub(crate) use exec::{Combine, Exec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VectorError {
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("operation requires a non-empty vector")]
    EmptyVector,
    #[error("invalid execution policy: {0}")]
    InvalidPolicy(String),
    #[error("access violation: {0}")]
    AccessViolation(String),
    #[error("operands use different backends ({0} vs {1})")]
    BackendMismatch(&'static str, &'static str),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Comm(#[from] CommError),
}

pub type VResult<T> = Result<T, VectorError>;

/// Element-wise maps of one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnaryOp {
    /// `c * x`
    Scale(f64),
    /// `|x|`
    Abs,
    /// `1 / x`, no zero check
    Inv,
    /// `x + b`
    AddConst(f64),
    /// `1` if `|x| >= c`, else `0`
    Compare(f64),
}

impl UnaryOp {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            UnaryOp::Scale(c) => c * x,
            UnaryOp::Abs => x.abs(),
            UnaryOp::Inv => 1.0 / x,
            UnaryOp::AddConst(b) => x + b,
            UnaryOp::Compare(c) => {
                if x.abs() >= c {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Element-wise maps of two inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Prod,
    /// `x / y`, no zero check
    Div,
}

impl BinaryOp {
    #[inline]
    pub fn apply(self, x: f64, y: f64) -> f64 {
        match self {
            BinaryOp::Prod => x * y,
            BinaryOp::Div => x / y,
        }
    }
}

/// Two-sided constraint test used by `constr_mask`.
///
/// Codes: `2` requires `x > 0`, `1` requires `x >= 0`, `-1` requires `x <= 0`,
/// `-2` requires `x < 0`, `0` means unconstrained.
#[inline]
pub fn violates_constraint(code: f64, x: f64) -> bool {
    if code == 2.0 {
        x <= 0.0
    } else if code == 1.0 {
        x < 0.0
    } else if code == -1.0 {
        x > 0.0
    } else if code == -2.0 {
        x >= 0.0
    } else {
        false
    }
}

/// The vector contract every integrator and solver is written against.
///
/// Streaming operations write into `self`. Reductions return a scalar.
pub trait Vector: Send + Sized {
    /// Global length.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A new zero vector with the same layout, backend and communicator.
    fn duplicate(&self) -> Self;

    fn const_fill(&mut self, c: f64) -> VResult<()>;

    /// `z = x`
    fn copy_from(&mut self, x: &Self) -> VResult<()>;

    /// `z = a x + b y`
    fn linear_sum(&mut self, a: f64, x: &Self, b: f64, y: &Self) -> VResult<()>;

    /// `z = a z + b y`
    fn scale_add(&mut self, a: f64, b: f64, y: &Self) -> VResult<()>;

    fn unary(&mut self, op: UnaryOp, x: &Self) -> VResult<()>;

    fn binary(&mut self, op: BinaryOp, x: &Self, y: &Self) -> VResult<()>;

    fn dot(&self, y: &Self) -> VResult<f64>;

    fn max_norm(&self) -> VResult<f64>;

    fn min_val(&self) -> VResult<f64>;

    fn l1_norm(&self) -> VResult<f64>;

    /// `sum (x_i w_i)^2`, restricted to `mask_i > 0` when a mask is given.
    fn weighted_sq_sum(&self, w: &Self, mask: Option<&Self>) -> VResult<f64>;

    /// `min num_i / den_i` over `den_i != 0`, `+inf` if there is none.
    fn min_quotient(&self, den: &Self) -> VResult<f64>;

    /// `z_i = 1 / x_i` where `x_i != 0`. Returns `false` if any `x_i == 0`.
    fn inv_test(&mut self, x: &Self) -> VResult<bool>;

    /// `m_i = 1` where `x_i` violates constraint `c_i`, else `0`. Returns
    /// `true` if no constraint is violated.
    fn constr_mask(&mut self, c: &Self, x: &Self) -> VResult<bool>;

    /// `sqrt( (1/n) sum (x_i w_i)^2 )`
    fn wrms_norm(&self, w: &Self) -> VResult<f64> {
        let n = self.len();
        if n == 0 {
            return Err(VectorError::EmptyVector);
        }
        Ok((self.weighted_sq_sum(w, None)? / n as f64).sqrt())
    }

    /// Masked WRMS norm. The divisor stays the full length `n`.
    fn wrms_norm_mask(&self, w: &Self, mask: &Self) -> VResult<f64> {
        let n = self.len();
        if n == 0 {
            return Err(VectorError::EmptyVector);
        }
        Ok((self.weighted_sq_sum(w, Some(mask))? / n as f64).sqrt())
    }

    /// `sqrt( sum (x_i w_i)^2 )`
    fn wl2_norm(&self, w: &Self) -> VResult<f64> {
        Ok(self.weighted_sq_sum(w, None)?.sqrt())
    }

    fn prod(&mut self, x: &Self, y: &Self) -> VResult<()> {
        self.binary(BinaryOp::Prod, x, y)
    }

    fn div(&mut self, x: &Self, y: &Self) -> VResult<()> {
        self.binary(BinaryOp::Div, x, y)
    }

    fn scale(&mut self, c: f64, x: &Self) -> VResult<()> {
        self.unary(UnaryOp::Scale(c), x)
    }

    fn abs_val(&mut self, x: &Self) -> VResult<()> {
        self.unary(UnaryOp::Abs, x)
    }

    fn inv(&mut self, x: &Self) -> VResult<()> {
        self.unary(UnaryOp::Inv, x)
    }

    fn add_const(&mut self, x: &Self, b: f64) -> VResult<()> {
        self.unary(UnaryOp::AddConst(b), x)
    }

    fn compare(&mut self, c: f64, x: &Self) -> VResult<()> {
        self.unary(UnaryOp::Compare(c), x)
    }

    /// `z_i = op(z_i)`
    fn unary_in_place(&mut self, op: UnaryOp) -> VResult<()> {
        let mut x = self.duplicate();
        x.copy_from(self)?;
        self.unary(op, &x)
    }

    /// `z = c z`
    fn scale_in_place(&mut self, c: f64) -> VResult<()> {
        self.unary_in_place(UnaryOp::Scale(c))
    }
}

/// Node-local vectors: a single contiguous array in one memory space.
pub trait LocalVector: Vector + Sync {
    fn backend_name(&self) -> &'static str;

    /// Space holding the authoritative copy of the data.
    fn space(&self) -> MemorySpace;

    /// Execution-space access, as seen by a kernel launched on this vector.
    fn data(&self) -> VResult<&[f64]>;

    fn data_mut(&mut self) -> VResult<&mut [f64]>;

    /// Read-only access from `space`. Fails unless the data is coherent there.
    fn view(&self, space: MemorySpace) -> VResult<&[f64]>;

    /// Host-side write access. On device-resident vectors this invalidates
    /// the device copy until [`LocalVector::copy_to_space`] is called.
    fn host_view_mut(&mut self) -> VResult<&mut [f64]>;

    /// Makes the data coherent in `space`.
    fn copy_to_space(&mut self, space: MemorySpace) -> VResult<()>;

    /// Makes the data coherent on the host.
    fn copy_from_space(&mut self) -> VResult<()>;

    fn set_exec_policy(&mut self, streaming: ExecPolicy, reduction: ExecPolicy) -> VResult<()>;

    fn exec_policy(&self) -> Option<(ExecPolicy, ExecPolicy)>;

    /// Ordering tag; operations on one queue run in issue order.
    fn queue_id(&self) -> u32;

    fn set_queue_id(&mut self, queue: u32);

    fn counters(&self) -> &OpCounters;
}

/// Number of streaming and reduction kernels issued through a context.
#[derive(Debug, Default)]
pub struct OpCounters {
    streaming: AtomicU64,
    reductions: AtomicU64,
}

impl OpCounters {
    pub fn streaming(&self) -> u64 {
        self.streaming.load(Ordering::Relaxed)
    }

    pub fn reductions(&self) -> u64 {
        self.reductions.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.streaming.store(0, Ordering::Relaxed);
        self.reductions.store(0, Ordering::Relaxed);
    }

    pub(crate) fn bump_streaming(&self) {
        self.streaming.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn bump_reduction(&self) {
        self.reductions.fetch_add(1, Ordering::Relaxed);
    }
}

/// Memory arbiter, worker pool and op counters shared by vectors created
/// from it.
#[derive(Debug, Clone)]
pub struct ExecContext {
    arbiter: MemoryArbiter,
    pool: WorkerPool,
    counters: Arc<OpCounters>,
}

impl ExecContext {
    pub fn new(workers: usize) -> Self {
        Self::with_arbiter(MemoryArbiter::new(), workers)
    }

    pub fn with_arbiter(arbiter: MemoryArbiter, workers: usize) -> Self {
        Self {
            arbiter,
            pool: WorkerPool::new(workers),
            counters: Arc::new(OpCounters::default()),
        }
    }

    pub fn arbiter(&self) -> &MemoryArbiter {
        &self.arbiter
    }

    pub fn pool(&self) -> &WorkerPool {
        &self.pool
    }

    pub fn counters(&self) -> &OpCounters {
        &self.counters
    }
}

/// Internal view of a node-local backend used by the shared kernels.
pub(crate) trait Backing {
    fn exec(&self) -> &Exec;
    fn counters_ref(&self) -> &OpCounters;
    fn read(&self) -> VResult<&[f64]>;
    fn parts_mut(&mut self) -> VResult<(&Exec, &mut [f64])>;
    /// Returns a reduction result to the caller.
    fn deliver(&self, value: f64) -> VResult<f64>;
    fn length(&self) -> usize;
}

pub(crate) mod kernels {
    use super::*;

    fn same(expected: usize, found: usize) -> VResult<()> {
        if expected == found {
            Ok(())
        } else {
            Err(VectorError::LengthMismatch { expected, found })
        }
    }

    pub fn const_fill<B: Backing>(z: &mut B, c: f64) -> VResult<()> {
        z.counters_ref().bump_streaming();
        let (exec, zs) = z.parts_mut()?;
        exec.map(zs, |_, _| c);
        Ok(())
    }

    pub fn copy_from<B: Backing>(z: &mut B, x: &B) -> VResult<()> {
        same(z.length(), x.length())?;
        z.counters_ref().bump_streaming();
        let xs = x.read()?;
        let (exec, zs) = z.parts_mut()?;
        exec.map(zs, |i, _| xs[i]);
        Ok(())
    }

    pub fn linear_sum<B: Backing>(z: &mut B, a: f64, x: &B, b: f64, y: &B) -> VResult<()> {
        same(z.length(), x.length())?;
        same(z.length(), y.length())?;
        z.counters_ref().bump_streaming();
        let (xs, ys) = (x.read()?, y.read()?);
        let (exec, zs) = z.parts_mut()?;
        exec.map(zs, |i, _| a * xs[i] + b * ys[i]);
        Ok(())
    }

    pub fn scale_add<B: Backing>(z: &mut B, a: f64, b: f64, y: &B) -> VResult<()> {
        same(z.length(), y.length())?;
        z.counters_ref().bump_streaming();
        let ys = y.read()?;
        let (exec, zs) = z.parts_mut()?;
        exec.map(zs, |i, old| a * old + b * ys[i]);
        Ok(())
    }

    pub fn unary<B: Backing>(z: &mut B, op: UnaryOp, x: &B) -> VResult<()> {
        same(z.length(), x.length())?;
        z.counters_ref().bump_streaming();
        let xs = x.read()?;
        let (exec, zs) = z.parts_mut()?;
        exec.map(zs, |i, _| op.apply(xs[i]));
        Ok(())
    }

    pub fn binary<B: Backing>(z: &mut B, op: BinaryOp, x: &B, y: &B) -> VResult<()> {
        same(z.length(), x.length())?;
        same(z.length(), y.length())?;
        z.counters_ref().bump_streaming();
        let (xs, ys) = (x.read()?, y.read()?);
        let (exec, zs) = z.parts_mut()?;
        exec.map(zs, |i, _| op.apply(xs[i], ys[i]));
        Ok(())
    }

    fn reduce<B: Backing, F>(x: &B, op: Combine, term: F) -> VResult<f64>
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        x.counters_ref().bump_reduction();
        let r = x.exec().reduce(x.length(), op, term);
        x.deliver(r)
    }

    pub fn dot<B: Backing>(x: &B, y: &B) -> VResult<f64> {
        same(x.length(), y.length())?;
        let (xs, ys) = (x.read()?, y.read()?);
        reduce(x, Combine::Sum, |i| xs[i] * ys[i])
    }

    pub fn max_norm<B: Backing>(x: &B) -> VResult<f64> {
        if x.length() == 0 {
            return Err(VectorError::EmptyVector);
        }
        let xs = x.read()?;
        reduce(x, Combine::Max, |i| xs[i].abs())
    }

    pub fn min_val<B: Backing>(x: &B) -> VResult<f64> {
        if x.length() == 0 {
            return Err(VectorError::EmptyVector);
        }
        let xs = x.read()?;
        reduce(x, Combine::Min, |i| xs[i])
    }

    pub fn l1_norm<B: Backing>(x: &B) -> VResult<f64> {
        let xs = x.read()?;
        reduce(x, Combine::Sum, |i| xs[i].abs())
    }

    pub fn weighted_sq_sum<B: Backing>(x: &B, w: &B, mask: Option<&B>) -> VResult<f64> {
        same(x.length(), w.length())?;
        let (xs, ws) = (x.read()?, w.read()?);
        match mask {
            None => reduce(x, Combine::Sum, |i| {
                let p = xs[i] * ws[i];
                p * p
            }),
            Some(m) => {
                same(x.length(), m.length())?;
                let ms = m.read()?;
                reduce(x, Combine::Sum, |i| {
                    if ms[i] > 0.0 {
                        let p = xs[i] * ws[i];
                        p * p
                    } else {
                        0.0
                    }
                })
            }
        }
    }

    pub fn min_quotient<B: Backing>(num: &B, den: &B) -> VResult<f64> {
        same(num.length(), den.length())?;
        let (ns, ds) = (num.read()?, den.read()?);
        reduce(num, Combine::Min, |i| {
            if ds[i] != 0.0 {
                ns[i] / ds[i]
            } else {
                f64::INFINITY
            }
        })
    }

    pub fn inv_test<B: Backing>(z: &mut B, x: &B) -> VResult<bool> {
        same(z.length(), x.length())?;
        let xs = x.read()?;
        {
            let (exec, zs) = z.parts_mut()?;
            exec.map(zs, |i, old| if xs[i] != 0.0 { 1.0 / xs[i] } else { old });
        }
        let all_nonzero = reduce(z, Combine::Min, |i| if xs[i] != 0.0 { 1.0 } else { 0.0 })?;
        Ok(all_nonzero > 0.5)
    }

    pub fn constr_mask<B: Backing>(m: &mut B, c: &B, x: &B) -> VResult<bool> {
        same(m.length(), c.length())?;
        same(m.length(), x.length())?;
        let (cs, xs) = (c.read()?, x.read()?);
        {
            let (exec, ms) = m.parts_mut()?;
            exec.map(ms, |i, _| {
                if violates_constraint(cs[i], xs[i]) {
                    1.0
                } else {
                    0.0
                }
            });
        }
        let any = reduce(m, Combine::Max, |i| {
            if violates_constraint(cs[i], xs[i]) {
                1.0
            } else {
                0.0
            }
        })?;
        Ok(any < 0.5)
    }
}

/// Implements [`Vector`] for a [`Backing`] type through the shared kernels.
macro_rules! impl_vector_via_kernels {
    ($ty:ty) => {
        impl $crate::nvector::Vector for $ty {
            fn len(&self) -> usize {
                $crate::nvector::Backing::length(self)
            }
            fn duplicate(&self) -> Self {
                self.zeroed_like()
            }
            fn const_fill(&mut self, c: f64) -> $crate::nvector::VResult<()> {
                $crate::nvector::kernels::const_fill(self, c)
            }
            fn copy_from(&mut self, x: &Self) -> $crate::nvector::VResult<()> {
                $crate::nvector::kernels::copy_from(self, x)
            }
            fn linear_sum(&mut self, a: f64, x: &Self, b: f64, y: &Self) -> $crate::nvector::VResult<()> {
                $crate::nvector::kernels::linear_sum(self, a, x, b, y)
            }
            fn scale_add(&mut self, a: f64, b: f64, y: &Self) -> $crate::nvector::VResult<()> {
                $crate::nvector::kernels::scale_add(self, a, b, y)
            }
            fn unary(&mut self, op: $crate::nvector::UnaryOp, x: &Self) -> $crate::nvector::VResult<()> {
                $crate::nvector::kernels::unary(self, op, x)
            }
            fn binary(&mut self, op: $crate::nvector::BinaryOp, x: &Self, y: &Self) -> $crate::nvector::VResult<()> {
                $crate::nvector::kernels::binary(self, op, x, y)
            }
            fn dot(&self, y: &Self) -> $crate::nvector::VResult<f64> {
                $crate::nvector::kernels::dot(self, y)
            }
            fn max_norm(&self) -> $crate::nvector::VResult<f64> {
                $crate::nvector::kernels::max_norm(self)
            }
            fn min_val(&self) -> $crate::nvector::VResult<f64> {
                $crate::nvector::kernels::min_val(self)
            }
            fn l1_norm(&self) -> $crate::nvector::VResult<f64> {
                $crate::nvector::kernels::l1_norm(self)
            }
            fn weighted_sq_sum(&self, w: &Self, mask: Option<&Self>) -> $crate::nvector::VResult<f64> {
                $crate::nvector::kernels::weighted_sq_sum(self, w, mask)
            }
            fn min_quotient(&self, den: &Self) -> $crate::nvector::VResult<f64> {
                $crate::nvector::kernels::min_quotient(self, den)
            }
            fn inv_test(&mut self, x: &Self) -> $crate::nvector::VResult<bool> {
                $crate::nvector::kernels::inv_test(self, x)
            }
            fn constr_mask(&mut self, c: &Self, x: &Self) -> $crate::nvector::VResult<bool> {
                $crate::nvector::kernels::constr_mask(self, c, x)
            }
            fn unary_in_place(&mut self, op: $crate::nvector::UnaryOp) -> $crate::nvector::VResult<()> {
                $crate::nvector::Backing::counters_ref(self).bump_streaming();
                let (exec, zs) = $crate::nvector::Backing::parts_mut(self)?;
                exec.map(zs, |_, old| op.apply(old));
                Ok(())
            }
        }
    };
}
pub(crate) use impl_vector_via_kernels;
