use std::sync::{Arc, PoisonError, RwLock, RwLockReadGuard, RwLockWriteGuard};

use super::{Addr, AllocId, BoundedAllocation, Bounds, BoundsError, CheckMode, Pool, Violation};
use crate::sink::Sink;

/// Thread-safe [`Pool`]. Queries take a shared lock, everything that
/// mutates the registry or the arena takes the exclusive one.
#[derive(Debug)]
pub struct PoolRegistry {
    pool: RwLock<Pool>,
}

impl PoolRegistry {
    pub fn new(extent_len: usize, mode: CheckMode) -> Result<Self, BoundsError> {
        Pool::new(extent_len, mode).map(Self::from)
    }

    pub fn with_sink(self, sink: Arc<dyn Sink<Violation>>) -> Self {
        Self::from(self.into_inner().with_sink(sink))
    }

    pub fn into_inner(self) -> Pool {
        self.pool.into_inner().unwrap_or_else(PoisonError::into_inner)
    }

    pub fn read(&self) -> RwLockReadGuard<'_, Pool> {
        self.pool.read().unwrap_or_else(PoisonError::into_inner)
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, Pool> {
        self.pool.write().unwrap_or_else(PoisonError::into_inner)
    }

    pub fn mode(&self) -> CheckMode {
        self.read().mode()
    }

    pub fn live_count(&self) -> usize {
        self.read().live_count()
    }

    pub fn alloc(&self, size: usize) -> Result<BoundedAllocation, BoundsError> {
        self.write().alloc(size)
    }

    pub fn free(&self, id: AllocId) -> Result<(), BoundsError> {
        self.write().free(id)
    }

    pub fn load_bounds(&self, addr: Addr) -> Bounds {
        self.read().load_bounds(addr)
    }

    pub fn check_access(
        &self,
        addr: Addr,
        len: usize,
        operation: &'static str,
    ) -> Result<(), BoundsError> {
        self.read().check_access(addr, len, operation)
    }

    pub fn checked_copy(&self, dst: Addr, src: Addr, n: usize) -> Result<(), BoundsError> {
        self.write().checked_copy(dst, src, n)
    }

    pub fn checked_move(&self, dst: Addr, src: Addr, n: usize) -> Result<(), BoundsError> {
        self.write().checked_move(dst, src, n)
    }

    pub fn checked_set(&self, dst: Addr, byte: u8, n: usize) -> Result<(), BoundsError> {
        self.write().checked_set(dst, byte, n)
    }
}

impl From<Pool> for PoolRegistry {
    fn from(pool: Pool) -> Self {
        Self {
            pool: RwLock::new(pool),
        }
    }
}
