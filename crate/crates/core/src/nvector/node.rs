use std::fmt;
use std::str::FromStr;

use super::{
    BinaryOp, DeviceSimVector, ExecContext, ExecPolicy, LocalVector, OpCounters, PooledVector,
    SerialVector, UnaryOp, VResult, Vector, VectorError,
};
use crate::memory::MemorySpace;

/// Node-local backend selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    Serial,
    Pooled,
    DeviceSim,
    /// Device-simulated vector backed by unified memory.
    DeviceSimUnified,
}

impl Backend {
    pub const ALL: [Backend; 3] = [Backend::Serial, Backend::Pooled, Backend::DeviceSim];

    pub fn name(self) -> &'static str {
        match self {
            Backend::Serial => "serial",
            Backend::Pooled => "pooled",
            Backend::DeviceSim => "devsim",
            Backend::DeviceSimUnified => "devsim-unified",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "serial" => Ok(Backend::Serial),
            "pooled" => Ok(Backend::Pooled),
            "devsim" => Ok(Backend::DeviceSim),
            "devsim-unified" => Ok(Backend::DeviceSimUnified),
            other => Err(format!("unknown backend `{other}`")),
        }
    }
}

/// A node-local vector whose backend is chosen at run time.
#[derive(Debug)]
pub enum NodeVector {
    Serial(SerialVector),
    Pooled(PooledVector),
    DeviceSim(DeviceSimVector),
}

impl NodeVector {
    pub fn new(backend: Backend, ctx: &ExecContext, n: usize) -> Self {
        match backend {
            Backend::Serial => NodeVector::Serial(SerialVector::new(ctx, n)),
            Backend::Pooled => NodeVector::Pooled(PooledVector::new(ctx, n)),
            Backend::DeviceSim => NodeVector::DeviceSim(DeviceSimVector::new(ctx, n)),
            Backend::DeviceSimUnified => {
                NodeVector::DeviceSim(DeviceSimVector::new_unified(ctx, n))
            }
        }
    }

    /// Builds a vector holding `values`. Device backends perform the initial
    /// host → device load.
    pub fn from_host(backend: Backend, ctx: &ExecContext, values: &[f64]) -> Self {
        match backend {
            Backend::Serial => NodeVector::Serial(SerialVector::from_slice(ctx, values)),
            Backend::Pooled => NodeVector::Pooled(PooledVector::from_slice(ctx, values)),
            Backend::DeviceSim => NodeVector::DeviceSim(DeviceSimVector::from_host(ctx, values)),
            Backend::DeviceSimUnified => {
                NodeVector::DeviceSim(DeviceSimVector::from_host_unified(ctx, values))
            }
        }
    }

    pub fn backend(&self) -> Backend {
        match self {
            NodeVector::Serial(_) => Backend::Serial,
            NodeVector::Pooled(_) => Backend::Pooled,
            NodeVector::DeviceSim(v) if v.is_unified() => Backend::DeviceSimUnified,
            NodeVector::DeviceSim(_) => Backend::DeviceSim,
        }
    }

    /// Host copy of the contents, going through `copy_from_space` if needed.
    pub fn to_host_vec(&mut self) -> VResult<Vec<f64>> {
        self.copy_from_space()?;
        Ok(self.view(MemorySpace::Host)?.to_vec())
    }
}

macro_rules! each {
    ($self:expr, $v:ident => $body:expr) => {
        match $self {
            NodeVector::Serial($v) => $body,
            NodeVector::Pooled($v) => $body,
            NodeVector::DeviceSim($v) => $body,
        }
    };
}

fn mismatch(a: &NodeVector, b: &NodeVector) -> VectorError {
    VectorError::BackendMismatch(a.backend_name(), b.backend_name())
}

/// Dispatches an operation over `self` and one same-backend operand.
macro_rules! pair {
    ($self:expr, $x:expr, |$a:ident, $b:ident| $body:expr) => {{
        let x = $x;
        match ($self, x) {
            (NodeVector::Serial($a), NodeVector::Serial($b)) => $body,
            (NodeVector::Pooled($a), NodeVector::Pooled($b)) => $body,
            (NodeVector::DeviceSim($a), NodeVector::DeviceSim($b)) => $body,
            (s, x) => Err(mismatch(s, x)),
        }
    }};
}

macro_rules! triple {
    ($self:expr, $x:expr, $y:expr, |$a:ident, $b:ident, $c:ident| $body:expr) => {{
        let (x, y) = ($x, $y);
        match ($self, x, y) {
            (NodeVector::Serial($a), NodeVector::Serial($b), NodeVector::Serial($c)) => $body,
            (NodeVector::Pooled($a), NodeVector::Pooled($b), NodeVector::Pooled($c)) => $body,
            (NodeVector::DeviceSim($a), NodeVector::DeviceSim($b), NodeVector::DeviceSim($c)) => {
                $body
            }
            (s, x, y) => {
                if s.backend() != x.backend() {
                    Err(mismatch(s, x))
                } else {
                    Err(mismatch(s, y))
                }
            }
        }
    }};
}

impl Vector for NodeVector {
    fn len(&self) -> usize {
        each!(self, v => v.len())
    }

    fn duplicate(&self) -> Self {
        match self {
            NodeVector::Serial(v) => NodeVector::Serial(v.duplicate()),
            NodeVector::Pooled(v) => NodeVector::Pooled(v.duplicate()),
            NodeVector::DeviceSim(v) => NodeVector::DeviceSim(v.duplicate()),
        }
    }

    fn const_fill(&mut self, c: f64) -> VResult<()> {
        each!(self, v => v.const_fill(c))
    }

    fn copy_from(&mut self, x: &Self) -> VResult<()> {
        pair!(self, x, |a, b| a.copy_from(b))
    }

    fn linear_sum(&mut self, a: f64, x: &Self, b: f64, y: &Self) -> VResult<()> {
        triple!(self, x, y, |z, xv, yv| z.linear_sum(a, xv, b, yv))
    }

    fn scale_add(&mut self, a: f64, b: f64, y: &Self) -> VResult<()> {
        pair!(self, y, |z, yv| z.scale_add(a, b, yv))
    }

    fn unary(&mut self, op: UnaryOp, x: &Self) -> VResult<()> {
        pair!(self, x, |z, xv| z.unary(op, xv))
    }

    fn binary(&mut self, op: BinaryOp, x: &Self, y: &Self) -> VResult<()> {
        triple!(self, x, y, |z, xv, yv| z.binary(op, xv, yv))
    }

    fn dot(&self, y: &Self) -> VResult<f64> {
        pair!(self, y, |a, b| a.dot(b))
    }

    fn max_norm(&self) -> VResult<f64> {
        each!(self, v => v.max_norm())
    }

    fn min_val(&self) -> VResult<f64> {
        each!(self, v => v.min_val())
    }

    fn l1_norm(&self) -> VResult<f64> {
        each!(self, v => v.l1_norm())
    }

    fn weighted_sq_sum(&self, w: &Self, mask: Option<&Self>) -> VResult<f64> {
        match mask {
            None => pair!(self, w, |a, b| a.weighted_sq_sum(b, None)),
            Some(m) => triple!(self, w, m, |a, b, c| a.weighted_sq_sum(b, Some(c))),
        }
    }

    fn min_quotient(&self, den: &Self) -> VResult<f64> {
        pair!(self, den, |a, b| a.min_quotient(b))
    }

    fn inv_test(&mut self, x: &Self) -> VResult<bool> {
        pair!(self, x, |a, b| a.inv_test(b))
    }

    fn constr_mask(&mut self, c: &Self, x: &Self) -> VResult<bool> {
        triple!(self, c, x, |m, cv, xv| m.constr_mask(cv, xv))
    }

    fn unary_in_place(&mut self, op: UnaryOp) -> VResult<()> {
        each!(self, v => v.unary_in_place(op))
    }
}

impl LocalVector for NodeVector {
    fn backend_name(&self) -> &'static str {
        each!(self, v => v.backend_name())
    }
    fn space(&self) -> MemorySpace {
        each!(self, v => v.space())
    }
    fn data(&self) -> VResult<&[f64]> {
        each!(self, v => v.data())
    }
    fn data_mut(&mut self) -> VResult<&mut [f64]> {
        each!(self, v => v.data_mut())
    }
    fn view(&self, space: MemorySpace) -> VResult<&[f64]> {
        each!(self, v => v.view(space))
    }
    fn host_view_mut(&mut self) -> VResult<&mut [f64]> {
        each!(self, v => v.host_view_mut())
    }
    fn copy_to_space(&mut self, space: MemorySpace) -> VResult<()> {
        each!(self, v => v.copy_to_space(space))
    }
    fn copy_from_space(&mut self) -> VResult<()> {
        each!(self, v => v.copy_from_space())
    }
    fn set_exec_policy(&mut self, streaming: ExecPolicy, reduction: ExecPolicy) -> VResult<()> {
        each!(self, v => v.set_exec_policy(streaming, reduction))
    }
    fn exec_policy(&self) -> Option<(ExecPolicy, ExecPolicy)> {
        each!(self, v => v.exec_policy())
    }
    fn queue_id(&self) -> u32 {
        each!(self, v => v.queue_id())
    }
    fn set_queue_id(&mut self, queue: u32) {
        each!(self, v => v.set_queue_id(queue))
    }
    fn counters(&self) -> &OpCounters {
        each!(self, v => v.counters())
    }
}
