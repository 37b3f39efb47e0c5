use std::sync::Arc;

use super::{
    impl_vector_via_kernels, Backing, Exec, ExecContext, ExecPolicy, LocalVector, OpCounters,
    VResult, VectorError,
};
use crate::memory::{MemoryArbiter, MemoryBlock, MemorySpace};

/// Single-threaded host vector. Reductions are plain left folds.
#[derive(Debug)]
pub struct SerialVector {
    block: MemoryBlock,
    exec: Exec,
    counters: Arc<OpCounters>,
    arbiter: MemoryArbiter,
    queue: u32,
}

impl SerialVector {
    pub fn new(ctx: &ExecContext, n: usize) -> Self {
        Self {
            block: ctx.arbiter.alloc_f64(MemorySpace::Host, n),
            exec: Exec::Serial,
            counters: ctx.counters.clone(),
            arbiter: ctx.arbiter.clone(),
            queue: 0,
        }
    }

    pub fn from_slice(ctx: &ExecContext, values: &[f64]) -> Self {
        let mut v = Self::new(ctx, values.len());
        v.block
            .data_mut::<f64>()
            .expect("fresh f64 block")
            .copy_from_slice(values);
        v
    }

    fn zeroed_like(&self) -> Self {
        Self {
            block: self.arbiter.alloc_f64(MemorySpace::Host, self.block.len()),
            exec: Exec::Serial,
            counters: self.counters.clone(),
            arbiter: self.arbiter.clone(),
            queue: self.queue,
        }
    }
}

impl Backing for SerialVector {
    fn exec(&self) -> &Exec {
        &self.exec
    }
    fn counters_ref(&self) -> &OpCounters {
        &self.counters
    }
    fn read(&self) -> VResult<&[f64]> {
        Ok(self.block.data()?)
    }
    fn parts_mut(&mut self) -> VResult<(&Exec, &mut [f64])> {
        Ok((&self.exec, self.block.data_mut()?))
    }
    fn deliver(&self, value: f64) -> VResult<f64> {
        Ok(value)
    }
    fn length(&self) -> usize {
        self.block.len()
    }
}

impl_vector_via_kernels!(SerialVector);

impl LocalVector for SerialVector {
    fn backend_name(&self) -> &'static str {
        "serial"
    }
    fn space(&self) -> MemorySpace {
        MemorySpace::Host
    }
    fn data(&self) -> VResult<&[f64]> {
        self.read()
    }
    fn data_mut(&mut self) -> VResult<&mut [f64]> {
        Ok(self.block.data_mut()?)
    }
    fn view(&self, space: MemorySpace) -> VResult<&[f64]> {
        host_only_view(&self.block, space)
    }
    fn host_view_mut(&mut self) -> VResult<&mut [f64]> {
        Ok(self.block.host_view_mut()?)
    }
    fn copy_to_space(&mut self, space: MemorySpace) -> VResult<()> {
        host_only_space(space)
    }
    fn copy_from_space(&mut self) -> VResult<()> {
        Ok(())
    }
    fn set_exec_policy(&mut self, streaming: ExecPolicy, reduction: ExecPolicy) -> VResult<()> {
        streaming.validate_streaming()?;
        reduction.validate()?;
        Ok(())
    }
    fn exec_policy(&self) -> Option<(ExecPolicy, ExecPolicy)> {
        None
    }
    fn queue_id(&self) -> u32 {
        self.queue
    }
    fn set_queue_id(&mut self, queue: u32) {
        self.queue = queue;
    }
    fn counters(&self) -> &OpCounters {
        &self.counters
    }
}

pub(super) fn host_only_view(block: &MemoryBlock, space: MemorySpace) -> VResult<&[f64]> {
    match space {
        MemorySpace::Host | MemorySpace::Pinned => Ok(block.host_view()?),
        other => Err(VectorError::AccessViolation(format!(
            "host-resident vector has no {other} copy"
        ))),
    }
}

pub(super) fn host_only_space(space: MemorySpace) -> VResult<()> {
    match space {
        MemorySpace::Host | MemorySpace::Pinned => Ok(()),
        other => Err(VectorError::AccessViolation(format!(
            "host-resident vector cannot move to {other} memory"
        ))),
    }
}
