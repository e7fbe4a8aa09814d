//! Bounds checking backed by allocator metadata.
//!
//! Instead of storing bounds per pointer, the bounds of any address are
//! recomputed from the allocator's own bookkeeping: find the live allocation
//! covering the address and use `[base, base + capacity)`, where capacity is
//! the request rounded up to its size class. The rounded-up tail belongs to
//! nobody else, so the looser bound costs no safety.
//!
//! Addresses the allocator does not know about (outside the pool, in free
//! space, or in freed blocks) get [`Bounds::INFINITE`], the same fallback
//! used for pointers coming back from uninstrumented code.
//!
//! Addresses are plain integers in a simulated address space starting at
//! [`DEFAULT_POOL_START`]; the bytes live in a `Vec<u8>` arena.

mod pool;
mod registry;

pub use pool::Pool;
pub use registry::PoolRegistry;

use std::fmt;

use thiserror::Error;

pub type Addr = usize;

/// Capacities handed out by the pool: powers of two from 8 B to 8 KiB.
pub const SIZE_CLASSES: [usize; 11] = [8, 16, 32, 64, 128, 256, 512, 1024, 2048, 4096, 8192];
pub const MAX_SIZE_CLASS: usize = SIZE_CLASSES[SIZE_CLASSES.len() - 1];

/// First address of every pool. Aligned to the largest size class.
pub const DEFAULT_POOL_START: Addr = 0x10_0000;

/// Pattern written over freed blocks.
pub const POISON_FREE: u8 = 0x6b;

/// Smallest size class that can hold `size` bytes.
pub fn size_class(size: usize) -> Option<usize> {
    SIZE_CLASSES.iter().copied().find(|&class| class >= size)
}

/// Half-open interval `[lower, upper)` an access must stay inside.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bounds {
    pub lower: Addr,
    pub upper: Addr,
    pub infinite: bool,
}

impl Bounds {
    /// Admits every access.
    pub const INFINITE: Bounds = Bounds {
        lower: 0,
        upper: Addr::MAX,
        infinite: true,
    };

    pub fn new(lower: Addr, upper: Addr) -> Self {
        assert!(lower < upper, "empty bounds [{lower:#x},{upper:#x})");
        Self {
            lower,
            upper,
            infinite: false,
        }
    }

    pub fn len(&self) -> usize {
        self.upper - self.lower
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, addr: Addr, len: usize) -> bool {
        self.check(addr, len, "contains").is_ok()
    }

    /// Checks the access `[addr, addr + len)`. A zero-length access touches
    /// nothing and always passes.
    pub fn check(&self, addr: Addr, len: usize, operation: &'static str) -> Result<(), Violation> {
        if self.infinite || len == 0 {
            return Ok(());
        }
        let kind = if addr < self.lower {
            ViolationKind::LowerBound
        } else if addr.checked_add(len).map_or(true, |end| end > self.upper) {
            ViolationKind::UpperBound
        } else {
            return Ok(());
        };
        Err(Violation {
            kind,
            access_base: addr,
            access_len: len,
            bounds: *self,
            operation,
        })
    }
}

impl fmt::Display for Bounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.infinite {
            f.write_str("[inf)")
        } else {
            write!(f, "[{:#x},{:#x})", self.lower, self.upper)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AllocId(pub u64);

impl fmt::Display for AllocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// One live block in the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundedAllocation {
    pub id: AllocId,
    pub base: Addr,
    pub requested: usize,
    /// `requested` rounded up to a size class.
    pub capacity: usize,
}

impl BoundedAllocation {
    pub fn bounds(&self) -> Bounds {
        Bounds::new(self.base, self.end())
    }

    pub fn end(&self) -> Addr {
        self.base + self.capacity
    }

    pub fn covers(&self, addr: Addr) -> bool {
        (self.base..self.end()).contains(&addr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CheckMode {
    /// Violations fail the operation.
    #[default]
    Enforce,
    /// Violations are logged and the operation proceeds.
    Audit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    LowerBound,
    UpperBound,
}

impl ViolationKind {
    pub fn label(self) -> &'static str {
        match self {
            ViolationKind::LowerBound => "Lower",
            ViolationKind::UpperBound => "Upper",
        }
    }
}

/// An access that left its bounds.
///
/// Displays as the log line
/// `BND <Lower|Upper> op=<name> addr=<hex> len=<n> bounds=[<lo>,<hi>)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub access_base: Addr,
    pub access_len: usize,
    pub bounds: Bounds,
    pub operation: &'static str,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "BND {} op={} addr={:#x} len={} bounds={}",
            self.kind.label(),
            self.operation,
            self.access_base,
            self.access_len,
            self.bounds
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BoundsError {
    #[error("pool extent of {extent} bytes is too small; need more than {minimum}")]
    ExtentTooSmall { extent: usize, minimum: usize },
    #[error("size classes must be increasing powers of two aligned with the pool start")]
    InvalidSizeClasses,
    #[error("zero-sized allocation")]
    ZeroSize,
    #[error("allocation of {size} bytes exceeds the largest size class ({max})")]
    SizeTooLarge { size: usize, max: usize },
    #[error("pool exhausted allocating {size} bytes")]
    OutOfMemory { size: usize },
    #[error("double free of allocation {0}")]
    DoubleFree(AllocId),
    #[error("unknown allocation {0}")]
    UnknownAllocation(AllocId),
    #[error("{0}")]
    Violation(Violation),
    #[error("access [{addr:#x}, +{len}) is outside the pool arena")]
    OutsidePool { addr: Addr, len: usize },
}

impl BoundsError {
    pub fn violation(&self) -> Option<&Violation> {
        match self {
            BoundsError::Violation(v) => Some(v),
            _ => None,
        }
    }
}
