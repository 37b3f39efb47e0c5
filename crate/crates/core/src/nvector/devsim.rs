use std::sync::{Arc, Mutex};

use super::{
    impl_vector_via_kernels, Backing, Exec, ExecContext, ExecPolicy, LocalVector, OpCounters,
    VResult, VectorError,
};
use crate::memory::{MemoryArbiter, MemoryBlock, MemorySpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Coherence {
    Both,
    DeviceOnly,
    HostOnly,
}

/// One-element device result buffer and its pinned host landing slot.
#[derive(Debug)]
struct ScalarSlot {
    device: MemoryBlock,
    pinned: MemoryBlock,
}

/// Vector resident in simulated device memory.
///
/// Kernels run on the device copy. The host mirror is only readable after
/// [`LocalVector::copy_from_space`], and any kernel invalidates it again.
/// Reduction results travel device → pinned host through the arbiter, one
/// scalar transfer per reduction.
#[derive(Debug)]
pub struct DeviceSimVector {
    device: MemoryBlock,
    host: Option<MemoryBlock>,
    coherence: Coherence,
    unified: bool,
    scalar: Mutex<ScalarSlot>,
    exec: Exec,
    counters: Arc<OpCounters>,
    arbiter: MemoryArbiter,
    queue: u32,
}

impl DeviceSimVector {
    fn build(ctx: &ExecContext, n: usize, unified: bool, exec: Exec) -> Self {
        let arbiter = ctx.arbiter.clone();
        let space = if unified {
            MemorySpace::Unified
        } else {
            MemorySpace::Device
        };
        Self {
            device: arbiter.alloc_f64(space, n),
            host: None,
            coherence: if unified {
                Coherence::Both
            } else {
                Coherence::DeviceOnly
            },
            unified,
            scalar: Mutex::new(ScalarSlot {
                device: arbiter.alloc_f64(MemorySpace::Device, 1),
                pinned: arbiter.alloc_f64(MemorySpace::Pinned, 1),
            }),
            exec,
            counters: ctx.counters.clone(),
            arbiter,
            queue: 0,
        }
    }

    /// Zero vector in device memory.
    pub fn new(ctx: &ExecContext, n: usize) -> Self {
        Self::build(ctx, n, false, Exec::parallel(ctx.pool.clone()))
    }

    /// Zero vector in unified memory, readable from the host without copies.
    pub fn new_unified(ctx: &ExecContext, n: usize) -> Self {
        Self::build(ctx, n, true, Exec::parallel(ctx.pool.clone()))
    }

    /// Loads host values onto the device (one host → device copy).
    pub fn from_host(ctx: &ExecContext, values: &[f64]) -> Self {
        let mut v = Self::new(ctx, values.len());
        let mut host = ctx.arbiter.alloc_f64(MemorySpace::Host, values.len());
        host.host_view_mut::<f64>()
            .expect("host block")
            .copy_from_slice(values);
        ctx.arbiter
            .copy(&mut v.device, &host)
            .expect("matching fresh blocks");
        v.host = Some(host);
        v.coherence = Coherence::Both;
        v
    }

    pub fn from_host_unified(ctx: &ExecContext, values: &[f64]) -> Self {
        let mut v = Self::new_unified(ctx, values.len());
        v.device
            .host_view_mut::<f64>()
            .expect("unified block")
            .copy_from_slice(values);
        v
    }

    pub fn is_unified(&self) -> bool {
        self.unified
    }

    fn zeroed_like(&self) -> Self {
        Self {
            device: self.arbiter.alloc_f64(self.device.space(), self.device.len()),
            host: None,
            coherence: if self.unified {
                Coherence::Both
            } else {
                Coherence::DeviceOnly
            },
            unified: self.unified,
            scalar: Mutex::new(ScalarSlot {
                device: self.arbiter.alloc_f64(MemorySpace::Device, 1),
                pinned: self.arbiter.alloc_f64(MemorySpace::Pinned, 1),
            }),
            exec: self.exec.clone(),
            counters: self.counters.clone(),
            arbiter: self.arbiter.clone(),
            queue: self.queue,
        }
    }

    fn stale_device(&self) -> VectorError {
        VectorError::AccessViolation(format!(
            "device copy of block {} is stale; call copy_to_space first",
            self.device.id()
        ))
    }

    fn stale_host(&self) -> VectorError {
        VectorError::AccessViolation(format!(
            "block {} is device resident; call copy_from_space before host access",
            self.device.id()
        ))
    }

    fn host_mirror(&mut self) -> &mut MemoryBlock {
        let (arbiter, n) = (&self.arbiter, self.device.len());
        self.host
            .get_or_insert_with(|| arbiter.alloc_f64(MemorySpace::Host, n))
    }
}

impl Backing for DeviceSimVector {
    fn exec(&self) -> &Exec {
        &self.exec
    }
    fn counters_ref(&self) -> &OpCounters {
        &self.counters
    }
    fn read(&self) -> VResult<&[f64]> {
        if self.coherence == Coherence::HostOnly {
            return Err(self.stale_device());
        }
        Ok(self.device.data()?)
    }
    fn parts_mut(&mut self) -> VResult<(&Exec, &mut [f64])> {
        if self.coherence == Coherence::HostOnly {
            return Err(self.stale_device());
        }
        if !self.unified {
            self.coherence = Coherence::DeviceOnly;
        }
        Ok((&self.exec, self.device.data_mut()?))
    }
    fn deliver(&self, value: f64) -> VResult<f64> {
        let mut slot = self.scalar.lock().unwrap_or_else(|e| e.into_inner());
        let ScalarSlot { device, pinned } = &mut *slot;
        device.data_mut::<f64>()?[0] = value;
        self.arbiter.copy(pinned, device)?;
        Ok(pinned.host_view::<f64>()?[0])
    }
    fn length(&self) -> usize {
        self.device.len()
    }
}

impl_vector_via_kernels!(DeviceSimVector);

impl LocalVector for DeviceSimVector {
    fn backend_name(&self) -> &'static str {
        if self.unified {
            "devsim-unified"
        } else {
            "devsim"
        }
    }

    fn space(&self) -> MemorySpace {
        self.device.space()
    }

    fn data(&self) -> VResult<&[f64]> {
        self.read()
    }

    fn data_mut(&mut self) -> VResult<&mut [f64]> {
        Ok(self.parts_mut()?.1)
    }

    fn view(&self, space: MemorySpace) -> VResult<&[f64]> {
        match space {
            MemorySpace::Device | MemorySpace::Unified => self.read(),
            MemorySpace::Host | MemorySpace::Pinned => {
                if self.unified {
                    return Ok(self.device.host_view()?);
                }
                match (&self.host, self.coherence) {
                    (Some(h), Coherence::Both | Coherence::HostOnly) => Ok(h.host_view()?),
                    _ => Err(self.stale_host()),
                }
            }
        }
    }

    fn host_view_mut(&mut self) -> VResult<&mut [f64]> {
        if self.unified {
            return Ok(self.device.host_view_mut()?);
        }
        if self.host.is_none() || self.coherence == Coherence::DeviceOnly {
            return Err(self.stale_host());
        }
        self.coherence = Coherence::HostOnly;
        Ok(self.host_mirror().host_view_mut()?)
    }

    fn copy_to_space(&mut self, space: MemorySpace) -> VResult<()> {
        match space {
            MemorySpace::Host | MemorySpace::Pinned => self.copy_from_space(),
            MemorySpace::Device | MemorySpace::Unified => {
                if self.unified || self.coherence != Coherence::HostOnly {
                    return Ok(());
                }
                let host = self.host.as_ref().expect("host-only data has a mirror");
                self.arbiter.copy(&mut self.device, host)?;
                self.coherence = Coherence::Both;
                Ok(())
            }
        }
    }

    fn copy_from_space(&mut self) -> VResult<()> {
        if self.unified || self.coherence != Coherence::DeviceOnly {
            return Ok(());
        }
        let arbiter = self.arbiter.clone();
        self.host_mirror();
        let host = self.host.as_mut().expect("mirror just allocated");
        arbiter.copy(host, &self.device)?;
        self.coherence = Coherence::Both;
        Ok(())
    }

    fn set_exec_policy(&mut self, streaming: ExecPolicy, reduction: ExecPolicy) -> VResult<()> {
        self.exec
            .set_policies(streaming.validate_streaming()?, reduction.validate()?);
        Ok(())
    }

    fn exec_policy(&self) -> Option<(ExecPolicy, ExecPolicy)> {
        self.exec.policies()
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
