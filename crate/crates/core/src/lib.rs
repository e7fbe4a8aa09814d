//! User-space memory-safety toolkit.
//!
//! * [`refcount`]: a saturating, overflow-proof reference counter.
//! * [`bounds`]: spatial checks whose bounds are derived from allocator
//!   size-class metadata, with checked memory wrappers.
//! * [`scanner`]: finds `atomic_t` variables used as reference counters in
//!   C sources.
//! * [`bench`]: micro-benchmarks for the overhead of the checks.
//! * [`cli`]: the `memguard` command line.

pub mod bench;
pub mod bounds;
pub mod cli;
pub mod refcount;
pub mod scanner;
pub mod sink;

pub use refcount::{MisuseEvent, MisuseKind, RefCount, REFCOUNT_SATURATED};
