//! Named memory spaces, tracked allocations and a transfer ledger.
//!
//! Every buffer used by the vector, matrix and solver objects lives in a
//! [`MemoryBlock`] handed out by a [`MemoryArbiter`]. Blocks are tagged with a
//! [`MemorySpace`]; data in [`MemorySpace::Device`] cannot be read through a
//! host view and has to be moved with [`MemoryArbiter::copy`], which records
//! the transfer in the ledger.
//!
//! Device memory here is an ordinary host allocation behind an access guard.
//! What matters is that the coherency rules are enforced and observable.

use std::collections::HashSet;
use std::fmt;
use std::sync::{Arc, Mutex, MutexGuard};

use bytemuck::Pod;
use thiserror::Error;

/// Where a block's data lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MemorySpace {
    Host,
    Device,
    /// Managed memory, addressable from either side.
    Unified,
    /// Page-locked host memory. Only distinguished for ledger bucketing.
    Pinned,
}

impl MemorySpace {
    pub const ALL: [MemorySpace; 4] = [
        MemorySpace::Host,
        MemorySpace::Device,
        MemorySpace::Unified,
        MemorySpace::Pinned,
    ];

    /// Whether host code may read the data without an explicit copy.
    pub fn host_accessible(self) -> bool {
        !matches!(self, MemorySpace::Device)
    }

    pub fn index(self) -> usize {
        match self {
            MemorySpace::Host => 0,
            MemorySpace::Device => 1,
            MemorySpace::Unified => 2,
            MemorySpace::Pinned => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MemorySpace::Host => "host",
            MemorySpace::Device => "device",
            MemorySpace::Unified => "unified",
            MemorySpace::Pinned => "pinned",
        }
    }
}

impl fmt::Display for MemorySpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Who frees the underlying buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReleaseResponsibility {
    Arbiter,
    /// User-provided buffer; the arbiter only detaches it.
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId(u64);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MemoryError {
    #[error("length mismatch: destination has {dst} elements, source has {src}")]
    LengthMismatch { dst: usize, src: usize },
    #[error("element width mismatch: destination {dst} bytes, source {src} bytes")]
    WidthMismatch { dst: usize, src: usize },
    #[error("block {0} used after release")]
    UseAfterRelease(BlockId),
    #[error("block {id} resides in {space} memory and is not host accessible")]
    AccessViolation { id: BlockId, space: MemorySpace },
    #[error("block element width {width} does not match requested type width {requested}")]
    TypeMismatch { width: usize, requested: usize },
}

/// Copy statistics for one (source, destination) space pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PairStats {
    pub copies: u64,
    pub bytes: u64,
    /// Copies of exactly one element.
    pub scalar_copies: u64,
}

/// Immutable snapshot of an arbiter's counters and transfer ledger.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransferStats {
    pairs: [[PairStats; 4]; 4],
    pub scalar_transfer_count: u64,
    pub alloc_count: u64,
    pub release_count: u64,
    pub outstanding: u64,
}

impl TransferStats {
    pub fn pair(&self, src: MemorySpace, dst: MemorySpace) -> PairStats {
        self.pairs[src.index()][dst.index()]
    }

    /// Copies between `src` and `dst` that moved more than one element.
    pub fn array_copies(&self, src: MemorySpace, dst: MemorySpace) -> u64 {
        let p = self.pair(src, dst);
        p.copies - p.scalar_copies
    }

    pub fn total_copies(&self) -> u64 {
        self.pairs.iter().flatten().map(|p| p.copies).sum()
    }

    /// Flat CSV: one `src,dst,copies,bytes` row per space pair followed by
    /// a `scalar_transfers,<count>` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("src,dst,copies,bytes\n");
        for src in MemorySpace::ALL {
            for dst in MemorySpace::ALL {
                let p = self.pair(src, dst);
                out.push_str(&format!("{},{},{},{}\n", src, dst, p.copies, p.bytes));
            }
        }
        out.push_str(&format!("scalar_transfers,{}\n", self.scalar_transfer_count));
        out
    }
}

#[derive(Default)]
struct ArbiterState {
    next_id: u64,
    live: HashSet<u64>,
    stats: TransferStats,
    external_wraps: u64,
}

struct ArbiterInner {
    state: Mutex<ArbiterState>,
}

/// Owner of the allocation tables and transfer ledger.
///
/// Cheap to clone; clones share the same tables. Counter updates are
/// serialized internally so blocks may be used from several threads.
#[derive(Clone)]
pub struct MemoryArbiter {
    inner: Arc<ArbiterInner>,
}

impl Default for MemoryArbiter {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for MemoryArbiter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.stats();
        f.debug_struct("MemoryArbiter")
            .field("outstanding", &s.outstanding)
            .field("copies", &s.total_copies())
            .finish()
    }
}

impl MemoryArbiter {
    pub fn new() -> Self {
        Self {
            inner: Arc::new(ArbiterInner {
                state: Mutex::new(ArbiterState::default()),
            }),
        }
    }

    fn lock(&self) -> MutexGuard<'_, ArbiterState> {
        // A panic while holding the lock cannot leave counters half-updated.
        self.inner.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn register(&self, responsibility: ReleaseResponsibility) -> BlockId {
        let mut st = self.lock();
        let id = st.next_id;
        st.next_id += 1;
        st.live.insert(id);
        match responsibility {
            ReleaseResponsibility::Arbiter => {
                st.stats.alloc_count += 1;
                st.stats.outstanding += 1;
            }
            ReleaseResponsibility::External => st.external_wraps += 1,
        }
        BlockId(id)
    }

    /// Allocates a zero-filled block of `length` elements of `elem_width` bytes.
    pub fn alloc(&self, space: MemorySpace, length: usize, elem_width: usize) -> MemoryBlock {
        assert!(elem_width > 0, "element width must be positive");
        let words = (length * elem_width).div_ceil(8);
        MemoryBlock {
            id: self.register(ReleaseResponsibility::Arbiter),
            space,
            length,
            elem_width,
            responsibility: ReleaseResponsibility::Arbiter,
            storage: vec![0u64; words],
            live: true,
            arbiter: self.clone(),
        }
    }

    /// Allocates a block of `f64` elements.
    pub fn alloc_f64(&self, space: MemorySpace, length: usize) -> MemoryBlock {
        self.alloc(space, length, std::mem::size_of::<f64>())
    }

    /// Wraps a caller-provided buffer. Releasing the block detaches the buffer
    /// without counting it as an arbiter free; it can be reclaimed with
    /// [`MemoryBlock::reclaim`].
    pub fn wrap_external<T: Pod>(&self, buffer: Vec<T>, space: MemorySpace) -> MemoryBlock {
        let elem_width = std::mem::size_of::<T>();
        let length = buffer.len();
        let storage = match bytemuck::allocation::try_cast_vec::<T, u64>(buffer) {
            Ok(words) => words,
            Err((_, buffer)) => {
                let mut words = vec![0u64; (length * elem_width).div_ceil(8)];
                bytemuck::cast_slice_mut::<u64, u8>(&mut words)[..length * elem_width]
                    .copy_from_slice(bytemuck::cast_slice(&buffer));
                words
            }
        };
        MemoryBlock {
            id: self.register(ReleaseResponsibility::External),
            space,
            length,
            elem_width,
            responsibility: ReleaseResponsibility::External,
            storage,
            live: true,
            arbiter: self.clone(),
        }
    }

    fn check_live(&self, st: &ArbiterState, block: &MemoryBlock) -> Result<(), MemoryError> {
        if block.live && st.live.contains(&block.id.0) {
            Ok(())
        } else {
            Err(MemoryError::UseAfterRelease(block.id))
        }
    }

    /// Synchronous copy of `src`'s contents into `dst`, recorded in the ledger
    /// under `(src.space, dst.space)`.
    pub fn copy(&self, dst: &mut MemoryBlock, src: &MemoryBlock) -> Result<(), MemoryError> {
        let mut st = self.lock();
        self.check_live(&st, src)?;
        self.check_live(&st, dst)?;
        if dst.length != src.length {
            return Err(MemoryError::LengthMismatch {
                dst: dst.length,
                src: src.length,
            });
        }
        if dst.elem_width != src.elem_width {
            return Err(MemoryError::WidthMismatch {
                dst: dst.elem_width,
                src: src.elem_width,
            });
        }
        let nbytes = src.byte_len();
        bytemuck::cast_slice_mut::<u64, u8>(&mut dst.storage)[..nbytes]
            .copy_from_slice(&bytemuck::cast_slice::<u64, u8>(&src.storage)[..nbytes]);
        let pair = &mut st.stats.pairs[src.space.index()][dst.space.index()];
        pair.copies += 1;
        pair.bytes += nbytes as u64;
        if src.length == 1 {
            pair.scalar_copies += 1;
            st.stats.scalar_transfer_count += 1;
        }
        Ok(())
    }

    /// Invalidates the block. Arbiter-owned storage is freed; external storage
    /// is detached and stays reclaimable.
    pub fn release(&self, block: &mut MemoryBlock) -> Result<(), MemoryError> {
        let mut st = self.lock();
        self.check_live(&st, block)?;
        st.live.remove(&block.id.0);
        block.live = false;
        if block.responsibility == ReleaseResponsibility::Arbiter {
            st.stats.release_count += 1;
            st.stats.outstanding -= 1;
            block.storage = Vec::new();
        }
        Ok(())
    }

    pub fn stats(&self) -> TransferStats {
        self.lock().stats.clone()
    }

    /// Zeroes the transfer ledger. Allocation counters are kept since they
    /// describe live state.
    pub fn reset_stats(&self) {
        let mut st = self.lock();
        st.stats.pairs = Default::default();
        st.stats.scalar_transfer_count = 0;
    }

    /// Number of live blocks of either responsibility.
    pub fn live_blocks(&self) -> usize {
        self.lock().live.len()
    }

    pub fn external_wraps(&self) -> u64 {
        self.lock().external_wraps
    }
}

/// A tagged, counted buffer.
///
/// Dropping a live block releases it.
pub struct MemoryBlock {
    id: BlockId,
    space: MemorySpace,
    length: usize,
    elem_width: usize,
    responsibility: ReleaseResponsibility,
    storage: Vec<u64>,
    live: bool,
    arbiter: MemoryArbiter,
}

impl fmt::Debug for MemoryBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MemoryBlock")
            .field("id", &self.id)
            .field("space", &self.space)
            .field("length", &self.length)
            .field("elem_width", &self.elem_width)
            .field("responsibility", &self.responsibility)
            .field("live", &self.live)
            .finish()
    }
}

impl Drop for MemoryBlock {
    fn drop(&mut self) {
        if self.live {
            let arbiter = self.arbiter.clone();
            let _ = arbiter.release(self);
        }
    }
}

impl MemoryBlock {
    pub fn id(&self) -> BlockId {
        self.id
    }

    pub fn space(&self) -> MemorySpace {
        self.space
    }

    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        self.length == 0
    }

    pub fn elem_width(&self) -> usize {
        self.elem_width
    }

    pub fn responsibility(&self) -> ReleaseResponsibility {
        self.responsibility
    }

    pub fn is_live(&self) -> bool {
        self.live
    }

    pub fn arbiter(&self) -> &MemoryArbiter {
        &self.arbiter
    }

    fn byte_len(&self) -> usize {
        self.length * self.elem_width
    }

    fn check_type<T: Pod>(&self) -> Result<(), MemoryError> {
        if !self.live {
            return Err(MemoryError::UseAfterRelease(self.id));
        }
        let requested = std::mem::size_of::<T>();
        if requested != self.elem_width {
            return Err(MemoryError::TypeMismatch {
                width: self.elem_width,
                requested,
            });
        }
        Ok(())
    }

    /// Execution-space access: the view a kernel running where the data lives
    /// would see. Not guarded by the host-access rule.
    pub fn data<T: Pod>(&self) -> Result<&[T], MemoryError> {
        self.check_type::<T>()?;
        let n = self.byte_len();
        Ok(bytemuck::cast_slice(&bytemuck::cast_slice::<u64, u8>(&self.storage)[..n]))
    }

    pub fn data_mut<T: Pod>(&mut self) -> Result<&mut [T], MemoryError> {
        self.check_type::<T>()?;
        let n = self.byte_len();
        Ok(bytemuck::cast_slice_mut(
            &mut bytemuck::cast_slice_mut::<u64, u8>(&mut self.storage)[..n],
        ))
    }

    /// Host view. Fails for device-resident blocks.
    pub fn host_view<T: Pod>(&self) -> Result<&[T], MemoryError> {
        if !self.space.host_accessible() {
            return Err(MemoryError::AccessViolation {
                id: self.id,
                space: self.space,
            });
        }
        self.data()
    }

    pub fn host_view_mut<T: Pod>(&mut self) -> Result<&mut [T], MemoryError> {
        if !self.space.host_accessible() {
            return Err(MemoryError::AccessViolation {
                id: self.id,
                space: self.space,
            });
        }
        self.data_mut()
    }

    /// Returns the storage of a released external block.
    pub fn reclaim<T: Pod>(mut self) -> Option<Vec<T>> {
        if self.live || self.responsibility != ReleaseResponsibility::External {
            return None;
        }
        if std::mem::size_of::<T>() != self.elem_width {
            return None;
        }
        let n = self.byte_len();
        let bytes = &bytemuck::cast_slice::<u64, u8>(&self.storage)[..n];
        let out = bytemuck::pod_collect_to_vec::<u8, T>(bytes);
        self.storage = Vec::new();
        Some(out)
    }
}
