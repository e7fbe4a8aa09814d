use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use super::{
    AllocId, Addr, BoundedAllocation, Bounds, BoundsError, CheckMode, Violation,
    DEFAULT_POOL_START, POISON_FREE, SIZE_CLASSES,
};
use crate::sink::{Sink, StderrSink};

/// Size-class pool over a flat arena, single owner.
///
/// Blocks are placed first-fit at an address aligned to their capacity, so
/// a block never straddles another block's rounded-up tail.
/// [`PoolRegistry`](super::PoolRegistry) wraps this for shared use.
pub struct Pool {
    start: Addr,
    size_classes: Vec<usize>,
    memory: Vec<u8>,
    mode: CheckMode,
    live: BTreeMap<Addr, BoundedAllocation>,
    by_id: HashMap<AllocId, Addr>,
    freed: HashSet<AllocId>,
    next_id: u64,
    sink: Arc<dyn Sink<Violation>>,
}

impl Pool {
    pub fn new(extent_len: usize, mode: CheckMode) -> Result<Self, BoundsError> {
        Self::with_size_classes(extent_len, mode, &SIZE_CLASSES)
    }

    /// A pool with its own class table. Classes must be increasing powers
    /// of two no larger than the alignment of [`DEFAULT_POOL_START`].
    pub fn with_size_classes(
        extent_len: usize,
        mode: CheckMode,
        classes: &[usize],
    ) -> Result<Self, BoundsError> {
        let valid = !classes.is_empty()
            && classes.iter().all(|c| c.is_power_of_two())
            && classes.windows(2).all(|w| w[0] < w[1])
            && DEFAULT_POOL_START % classes[classes.len() - 1] == 0;
        if !valid {
            return Err(BoundsError::InvalidSizeClasses);
        }
        let largest = classes[classes.len() - 1];
        if extent_len <= largest {
            return Err(BoundsError::ExtentTooSmall {
                extent: extent_len,
                minimum: largest,
            });
        }
        Ok(Self {
            start: DEFAULT_POOL_START,
            size_classes: classes.to_vec(),
            memory: vec![0; extent_len],
            mode,
            live: BTreeMap::new(),
            by_id: HashMap::new(),
            freed: HashSet::new(),
            next_id: 1,
            sink: Arc::new(StderrSink),
        })
    }

    /// Routes violation log lines to `sink` instead of standard error.
    pub fn with_sink(mut self, sink: Arc<dyn Sink<Violation>>) -> Self {
        self.sink = sink;
        self
    }

    pub fn size_classes(&self) -> &[usize] {
        &self.size_classes
    }

    pub fn max_size_class(&self) -> usize {
        self.size_classes[self.size_classes.len() - 1]
    }

    pub fn mode(&self) -> CheckMode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: CheckMode) {
        self.mode = mode;
    }

    /// `(start, length)` of the arena.
    pub fn extent(&self) -> (Addr, usize) {
        (self.start, self.memory.len())
    }

    pub fn live_count(&self) -> usize {
        self.live.len()
    }

    /// Live allocations in address order.
    pub fn allocations(&self) -> impl Iterator<Item = &BoundedAllocation> + '_ {
        self.live.values()
    }

    pub fn allocation(&self, id: AllocId) -> Option<&BoundedAllocation> {
        self.by_id.get(&id).and_then(|base| self.live.get(base))
    }

    pub fn alloc(&mut self, size: usize) -> Result<BoundedAllocation, BoundsError> {
        if size == 0 {
            return Err(BoundsError::ZeroSize);
        }
        let capacity = self
            .size_classes
            .iter()
            .copied()
            .find(|&class| class >= size)
            .ok_or(BoundsError::SizeTooLarge {
                size,
                max: self.max_size_class(),
            })?;
        let base = self
            .first_fit(capacity)
            .ok_or(BoundsError::OutOfMemory { size })?;

        let id = AllocId(self.next_id);
        self.next_id += 1;
        let allocation = BoundedAllocation {
            id,
            base,
            requested: size,
            capacity,
        };
        let offset = base - self.start;
        self.memory[offset..offset + capacity].fill(0);
        self.live.insert(base, allocation);
        self.by_id.insert(id, base);
        Ok(allocation)
    }

    fn first_fit(&self, capacity: usize) -> Option<Addr> {
        let end = self.start + self.memory.len();
        let mut cursor = self.start;
        for block in self.live.values() {
            let candidate = cursor.next_multiple_of(capacity);
            if candidate + capacity <= block.base {
                return Some(candidate);
            }
            cursor = block.end();
        }
        let candidate = cursor.next_multiple_of(capacity);
        (candidate + capacity <= end).then_some(candidate)
    }

    pub fn free(&mut self, id: AllocId) -> Result<(), BoundsError> {
        let Some(base) = self.by_id.remove(&id) else {
            return Err(if self.freed.contains(&id) {
                BoundsError::DoubleFree(id)
            } else {
                BoundsError::UnknownAllocation(id)
            });
        };
        let block = self
            .live
            .remove(&base)
            .expect("id index and address index out of sync");
        let offset = base - self.start;
        self.memory[offset..offset + block.capacity].fill(POISON_FREE);
        self.freed.insert(id);
        Ok(())
    }

    /// Bounds of whatever live block covers `addr`, or infinite bounds.
    pub fn load_bounds(&self, addr: Addr) -> Bounds {
        match self.live.range(..=addr).next_back() {
            Some((_, block)) if block.covers(addr) => block.bounds(),
            _ => Bounds::INFINITE,
        }
    }

    /// Checks `[addr, addr + len)` against the bounds loaded for `addr`.
    ///
    /// In audit mode a violation is logged and `Ok` is returned.
    pub fn check_access(
        &self,
        addr: Addr,
        len: usize,
        operation: &'static str,
    ) -> Result<(), BoundsError> {
        self.check_with_bounds(self.load_bounds(addr), addr, len, operation)
    }

    /// As [`check_access`](Self::check_access), with bounds the caller
    /// already holds.
    pub fn check_with_bounds(
        &self,
        bounds: Bounds,
        addr: Addr,
        len: usize,
        operation: &'static str,
    ) -> Result<(), BoundsError> {
        match bounds.check(addr, len, operation) {
            Ok(()) => Ok(()),
            Err(violation) => self.report(violation),
        }
    }

    #[cold]
    fn report(&self, violation: Violation) -> Result<(), BoundsError> {
        self.sink.report(&violation);
        match self.mode {
            CheckMode::Enforce => Err(BoundsError::Violation(violation)),
            CheckMode::Audit => Ok(()),
        }
    }

    /// `memcpy` with both operands checked against metadata-derived bounds.
    /// Overlapping operands are handled.
    pub fn checked_copy(&mut self, dst: Addr, src: Addr, n: usize) -> Result<(), BoundsError> {
        self.checked_transfer(dst, src, n, "checked_copy")
    }

    /// `memmove` with both operands checked.
    pub fn checked_move(&mut self, dst: Addr, src: Addr, n: usize) -> Result<(), BoundsError> {
        self.checked_transfer(dst, src, n, "checked_move")
    }

    /// `memcpy` against bounds the caller loaded earlier; no metadata lookup.
    pub fn checked_copy_with_bounds(
        &mut self,
        dst: Addr,
        dst_bounds: Bounds,
        src: Addr,
        src_bounds: Bounds,
        n: usize,
    ) -> Result<(), BoundsError> {
        self.check_with_bounds(src_bounds, src, n, "checked_copy")?;
        self.check_with_bounds(dst_bounds, dst, n, "checked_copy")?;
        self.copy_unchecked(dst, src, n)
    }

    fn checked_transfer(
        &mut self,
        dst: Addr,
        src: Addr,
        n: usize,
        operation: &'static str,
    ) -> Result<(), BoundsError> {
        if n == 0 {
            return Ok(());
        }
        self.check_access(src, n, operation)?;
        self.check_access(dst, n, operation)?;
        self.copy_unchecked(dst, src, n)
    }

    /// `memset` with the destination checked.
    pub fn checked_set(&mut self, dst: Addr, byte: u8, n: usize) -> Result<(), BoundsError> {
        if n == 0 {
            return Ok(());
        }
        self.check_access(dst, n, "checked_set")?;
        let range = self.arena_range(dst, n)?;
        self.memory[range].fill(byte);
        Ok(())
    }

    /// Uninstrumented copy: the only check is that both operands lie in the
    /// arena, since there is no memory behind other addresses.
    pub fn copy_unchecked(&mut self, dst: Addr, src: Addr, n: usize) -> Result<(), BoundsError> {
        let from = self.arena_range(src, n)?;
        let to = self.arena_range(dst, n)?;
        self.memory.copy_within(from, to.start);
        Ok(())
    }

    pub fn read_bytes(&self, addr: Addr, len: usize) -> Result<&[u8], BoundsError> {
        let range = self.arena_range(addr, len)?;
        Ok(&self.memory[range])
    }

    /// Unchecked store, for seeding test data.
    pub fn write_bytes(&mut self, addr: Addr, data: &[u8]) -> Result<(), BoundsError> {
        let range = self.arena_range(addr, data.len())?;
        self.memory[range].copy_from_slice(data);
        Ok(())
    }

    fn arena_range(&self, addr: Addr, len: usize) -> Result<std::ops::Range<usize>, BoundsError> {
        let outside = BoundsError::OutsidePool { addr, len };
        let offset = addr.checked_sub(self.start).ok_or(outside.clone())?;
        let end = offset.checked_add(len).ok_or(outside.clone())?;
        if end > self.memory.len() {
            return Err(outside);
        }
        Ok(offset..end)
    }
}

impl fmt::Debug for Pool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Pool")
            .field("start", &format_args!("{:#x}", self.start))
            .field("len", &self.memory.len())
            .field("mode", &self.mode)
            .field("live", &self.live.len())
            .finish_non_exhaustive()
    }
}
