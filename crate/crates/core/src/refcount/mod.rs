//! Overflow-proof reference counter.
//!
//! [`RefCount`] is a 32-bit atomic counter that refuses the two transitions
//! that turn reference-counting bugs into use-after-free: it never
//! increments from zero, and it never wraps. An increment that would pass
//! [`REFCOUNT_SATURATED`] pins the counter there instead, and a pinned
//! counter is never changed again by any operation except [`RefCount::set`].
//! The object then leaks, and the leak is reported.
//!
//! Every mutating operation is a compare-and-exchange retry loop over the
//! single atomic word, so the type is lock-free and can be shared freely
//! between threads.
//!
//! Operations split into two families:
//!
//! * increasing (`add`, `add_not_zero`, `inc`, `inc_not_zero`): the result
//!   is never smaller than the prior value, and a prior value of 0 is never
//!   changed;
//! * decreasing (`sub`, `sub_and_test`, `dec`, `dec_and_test`,
//!   `dec_if_one`, `dec_not_one`, `dec_and_lock`): the result is never
//!   larger than the prior value, and a saturated value is never changed.
//!
//! Refused or suspicious transitions produce a [`MisuseEvent`], delivered at
//! most once per kind per counter to the counter's [`Sink`].

mod lock;

pub use lock::{ExclusiveLock, SpinLock, SpinLockGuard};

use std::fmt;
use std::sync::atomic::{fence, AtomicU32, AtomicU8, Ordering};
use std::sync::Arc;

use crate::sink::{Sink, StderrSink};

/// The saturation value, `UINT_MAX` for a 32-bit counter.
pub const REFCOUNT_SATURATED: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MisuseKind {
    /// An increasing operation found the counter at zero.
    IncrementOnZero,
    /// A decreasing operation found the counter at zero.
    DecrementOnZero,
    /// A subtraction larger than the current value was refused.
    Underflow,
    /// The counter was pinned at [`REFCOUNT_SATURATED`].
    Saturated,
    /// `dec` or `sub` released the last reference without testing for it.
    DecrementToZeroWithoutTest,
    /// An add or subtract of zero was requested.
    ZeroDelta,
}

impl MisuseKind {
    pub const ALL: [MisuseKind; 6] = [
        MisuseKind::IncrementOnZero,
        MisuseKind::DecrementOnZero,
        MisuseKind::Underflow,
        MisuseKind::Saturated,
        MisuseKind::DecrementToZeroWithoutTest,
        MisuseKind::ZeroDelta,
    ];

    const fn latch_bit(self) -> u8 {
        1 << (self as u8)
    }

    pub fn description(self) -> &'static str {
        match self {
            MisuseKind::IncrementOnZero => "increment on 0; use-after-free",
            MisuseKind::DecrementOnZero => "decrement on 0; use-after-free",
            MisuseKind::Underflow => "underflow refused; use-after-free",
            MisuseKind::Saturated => "saturated; leaking memory",
            MisuseKind::DecrementToZeroWithoutTest => "decrement hit 0; leaking memory",
            MisuseKind::ZeroDelta => "zero adjustment requested",
        }
    }
}

/// A refused or saturating operation, as seen by the counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MisuseEvent {
    pub kind: MisuseKind,
    pub operation: &'static str,
    pub prior: u32,
}

impl fmt::Display for MisuseEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "refcount_t: {} (op={} prior={})",
            self.kind.description(),
            self.operation,
            self.prior
        )
    }
}

/// How an increasing operation found the counter.
enum Grow {
    Zero,
    Saturated,
    Added,
}

/// How a decreasing operation found the counter.
enum Shrink {
    Saturated,
    Zero,
    Underflow,
    Done { prior: u32, new: u32 },
}

/// Saturating, overflow-proof reference counter.
pub struct RefCount {
    value: AtomicU32,
    warned: AtomicU8,
    full_checks: bool,
    sink: Option<Arc<dyn Sink<MisuseEvent>>>,
}

impl RefCount {
    /// A fully checked counter holding `n` that reports to standard error.
    pub fn new(n: u32) -> Self {
        Self {
            value: AtomicU32::new(n),
            warned: AtomicU8::new(0),
            full_checks: true,
            sink: None,
        }
    }

    /// A counter with all checks compiled out at runtime: plain wrapping
    /// atomic arithmetic with the same signatures, for overhead comparison.
    pub fn unchecked(n: u32) -> Self {
        Self::new(n).with_full_checks(false)
    }

    pub fn with_full_checks(mut self, enabled: bool) -> Self {
        self.full_checks = enabled;
        self
    }

    pub fn with_sink(mut self, sink: Arc<dyn Sink<MisuseEvent>>) -> Self {
        self.sink = Some(sink);
        self
    }

    pub fn full_checks(&self) -> bool {
        self.full_checks
    }

    /// Stores `n` unconditionally. Used for initialization and object reuse;
    /// no invariant is checked.
    pub fn set(&self, n: u32) {
        self.value.store(n, Ordering::Release);
    }

    pub fn read(&self) -> u32 {
        self.value.load(Ordering::Acquire)
    }

    /// Adds `summand` unless the counter is zero. Returns `true` iff the
    /// prior value was non-zero. A saturated counter stays saturated and
    /// still returns `true`.
    pub fn add_not_zero(&self, summand: u32) -> bool {
        if !self.full_checks {
            return self.add_unless_zero_unchecked(summand);
        }
        if summand == 0 {
            let prior = self.read();
            self.warn(MisuseKind::ZeroDelta, "add_not_zero", prior);
            return prior != 0;
        }
        !matches!(self.grow(summand, "add_not_zero"), Grow::Zero)
    }

    /// Takes a new reference if the object is still alive. `true` means the
    /// counter was non-zero and the object is safe to use.
    #[inline]
    pub fn inc_not_zero(&self) -> bool {
        if !self.full_checks {
            return self.add_unless_zero_unchecked(1);
        }
        !matches!(self.grow(1, "inc_not_zero"), Grow::Zero)
    }

    pub fn add(&self, summand: u32) {
        self.add_as(summand, "add");
    }

    #[inline]
    pub fn inc(&self) {
        self.add_as(1, "inc");
    }

    /// Subtracts `subtrahend` and returns `true` iff the counter reached
    /// zero, in which case the caller owns the release of the object.
    pub fn sub_and_test(&self, subtrahend: u32) -> bool {
        self.sub_and_test_as(subtrahend, "sub_and_test")
    }

    pub fn dec_and_test(&self) -> bool {
        self.sub_and_test_as(1, "dec_and_test")
    }

    /// Subtraction for callers that know the counter cannot reach zero.
    /// Reaching zero anyway is allowed but reported.
    pub fn sub(&self, subtrahend: u32) {
        self.sub_untested_as(subtrahend, "sub");
    }

    pub fn dec(&self) {
        self.sub_untested_as(1, "dec");
    }

    /// Moves the counter from exactly 1 to 0 with a single exchange.
    /// Any other value, or losing a race, leaves it alone and returns `false`.
    pub fn dec_if_one(&self) -> bool {
        self.value
            .compare_exchange(1, 0, Ordering::AcqRel, Ordering::Relaxed)
            .is_ok()
    }

    /// Decrements unless the counter is 1, the "recyclable" sentinel of an
    /// object pool. Returns `false` only when the value was 1.
    ///
    /// A counter at zero is left alone and reported, and `true` is returned
    /// so that callers never start a release protocol for a dead object.
    pub fn dec_not_one(&self) -> bool {
        self.dec_not_one_as("dec_not_one")
    }

    /// Drops a reference, taking `lock` only if this may be the last one.
    ///
    /// Returns the held guard iff the counter reached zero; the caller frees
    /// the object and then drops the guard. Otherwise the lock is not held on
    /// return.
    pub fn dec_and_lock<'a, L: ExclusiveLock>(&self, lock: &'a L) -> Option<L::Guard<'a>> {
        if self.dec_not_one_as("dec_and_lock") {
            return None;
        }
        let guard = lock.acquire();
        if self.sub_and_test_as(1, "dec_and_lock") {
            Some(guard)
        } else {
            None
        }
    }

    #[inline]
    fn add_as(&self, summand: u32, op: &'static str) {
        if !self.full_checks {
            self.value.fetch_add(summand, Ordering::Relaxed);
            return;
        }
        if summand == 0 {
            self.warn(MisuseKind::ZeroDelta, op, self.read());
            return;
        }
        if let Grow::Zero = self.grow(summand, op) {
            self.warn(MisuseKind::IncrementOnZero, op, 0);
        }
    }

    fn sub_and_test_as(&self, subtrahend: u32, op: &'static str) -> bool {
        if !self.full_checks {
            return self.value.fetch_sub(subtrahend, Ordering::AcqRel) == subtrahend;
        }
        if subtrahend == 0 {
            self.warn(MisuseKind::ZeroDelta, op, self.read());
            return false;
        }
        matches!(self.shrink(subtrahend, op), Shrink::Done { new: 0, .. })
    }

    fn sub_untested_as(&self, subtrahend: u32, op: &'static str) {
        if !self.full_checks {
            self.value.fetch_sub(subtrahend, Ordering::Release);
            return;
        }
        if subtrahend == 0 {
            self.warn(MisuseKind::ZeroDelta, op, self.read());
            return;
        }
        if let Shrink::Done { prior, new: 0 } = self.shrink(subtrahend, op) {
            self.warn(MisuseKind::DecrementToZeroWithoutTest, op, prior);
        }
    }

    fn dec_not_one_as(&self, op: &'static str) -> bool {
        let mut val = self.value.load(Ordering::Relaxed);
        loop {
            if val == 1 {
                return false;
            }
            if self.full_checks {
                if val == REFCOUNT_SATURATED {
                    return true;
                }
                if val == 0 {
                    self.warn(MisuseKind::DecrementOnZero, op, 0);
                    return true;
                }
            }
            let new = val.wrapping_sub(1);
            match self
                .value
                .compare_exchange(val, new, Ordering::Release, Ordering::Relaxed)
            {
                Ok(_) => return true,
                Err(old) => val = old,
            }
        }
    }

    /// The checked addition loop: refuse zero, keep saturation, saturate
    /// instead of wrapping, and publish with one compare-and-exchange.
    #[inline]
    fn grow(&self, summand: u32, op: &'static str) -> Grow {
        let mut val = self.value.load(Ordering::Relaxed);
        loop {
            if val == 0 {
                return Grow::Zero;
            }
            if val == REFCOUNT_SATURATED {
                return Grow::Saturated;
            }
            let mut new = val.wrapping_add(summand);
            if new < val {
                new = REFCOUNT_SATURATED;
            }
            match self
                .value
                .compare_exchange(val, new, Ordering::Relaxed, Ordering::Relaxed)
            {
                Ok(_) => {
                    if new == REFCOUNT_SATURATED {
                        self.warn(MisuseKind::Saturated, op, val);
                    }
                    return Grow::Added;
                }
                Err(old) => val = old,
            }
        }
    }

    fn shrink(&self, subtrahend: u32, op: &'static str) -> Shrink {
        let mut val = self.value.load(Ordering::Relaxed);
        loop {
            if val == REFCOUNT_SATURATED {
                return Shrink::Saturated;
            }
            if val == 0 {
                self.warn(MisuseKind::DecrementOnZero, op, 0);
                return Shrink::Zero;
            }
            if subtrahend > val {
                self.warn(MisuseKind::Underflow, op, val);
                return Shrink::Underflow;
            }
            let new = val - subtrahend;
            match self
                .value
                .compare_exchange(val, new, Ordering::Release, Ordering::Relaxed)
            {
                Ok(_) => {
                    if new == 0 {
                        // Pairs with the Release of every other decrement so
                        // the releasing thread sees all prior accesses.
                        fence(Ordering::Acquire);
                    }
                    return Shrink::Done { prior: val, new };
                }
                Err(old) => val = old,
            }
        }
    }

    fn add_unless_zero_unchecked(&self, summand: u32) -> bool {
        let mut val = self.value.load(Ordering::Relaxed);
        loop {
            if val == 0 {
                return false;
            }
            match self.value.compare_exchange(
                val,
                val.wrapping_add(summand),
                Ordering::Relaxed,
                Ordering::Relaxed,
            ) {
                Ok(_) => return true,
                Err(old) => val = old,
            }
        }
    }

    #[cold]
    fn warn(&self, kind: MisuseKind, operation: &'static str, prior: u32) {
        let bit = kind.latch_bit();
        if self.warned.fetch_or(bit, Ordering::Relaxed) & bit != 0 {
            return;
        }
        let event = MisuseEvent {
            kind,
            operation,
            prior,
        };
        match &self.sink {
            Some(sink) => sink.report(&event),
            None => StderrSink.report(&event),
        }
    }
}

impl fmt::Debug for RefCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RefCount")
            .field("value", &self.read())
            .field("full_checks", &self.full_checks)
            .finish_non_exhaustive()
    }
}
