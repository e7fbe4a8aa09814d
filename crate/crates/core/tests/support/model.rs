//! Sequential reference model of the saturating counter, written directly
//! from the operation contracts with 64-bit arithmetic and no atomics.

use std::sync::{Arc, Mutex};

use memguard::sink::Collector;
use memguard::{MisuseEvent, MisuseKind, RefCount};
use rand::Rng;

pub const MAX: u32 = u32::MAX;

/// Starting values that exercise every branch.
pub const SEED_VALUES: [u32; 5] = [0, 1, 2, MAX - 2, MAX];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Set(u32),
    Read,
    AddNotZero(u32),
    IncNotZero,
    Add(u32),
    Inc,
    SubAndTest(u32),
    DecAndTest,
    Sub(u32),
    Dec,
    DecIfOne,
    DecNotOne,
    DecAndLock,
}

impl Op {
    pub fn is_increasing(self) -> bool {
        matches!(self, Op::AddNotZero(_) | Op::IncNotZero | Op::Add(_) | Op::Inc)
    }

    pub fn is_decreasing(self) -> bool {
        matches!(
            self,
            Op::SubAndTest(_)
                | Op::DecAndTest
                | Op::Sub(_)
                | Op::Dec
                | Op::DecIfOne
                | Op::DecNotOne
                | Op::DecAndLock
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ret {
    Unit,
    Bool(bool),
    Value(u32),
}

#[derive(Debug, Clone, Default)]
pub struct Model {
    pub value: u32,
    latched: Vec<MisuseKind>,
}

impl Model {
    pub fn new(value: u32) -> Self {
        Self {
            value,
            latched: Vec::new(),
        }
    }

    /// Applies `op`; returns the result and the misuse it detects (before
    /// the warn-once latch).
    pub fn step(&mut self, op: Op) -> (Ret, Option<MisuseKind>) {
        let v = self.value;
        let max = MAX as u64;
        match op {
            Op::Set(n) => {
                self.value = n;
                (Ret::Unit, None)
            }
            Op::Read => (Ret::Value(v), None),
            Op::AddNotZero(0) => (Ret::Bool(v != 0), Some(MisuseKind::ZeroDelta)),
            Op::AddNotZero(s) => {
                if v == 0 {
                    return (Ret::Bool(false), None);
                }
                if v == MAX {
                    return (Ret::Bool(true), None);
                }
                let new = (v as u64 + s as u64).min(max) as u32;
                self.value = new;
                (Ret::Bool(true), (new == MAX).then_some(MisuseKind::Saturated))
            }
            Op::IncNotZero => self.step(Op::AddNotZero(1)),
            Op::Add(0) => (Ret::Unit, Some(MisuseKind::ZeroDelta)),
            Op::Add(s) => {
                if v == 0 {
                    return (Ret::Unit, Some(MisuseKind::IncrementOnZero));
                }
                let (_, event) = self.step(Op::AddNotZero(s));
                (Ret::Unit, event)
            }
            Op::Inc => self.step(Op::Add(1)),
            Op::SubAndTest(0) => (Ret::Bool(false), Some(MisuseKind::ZeroDelta)),
            Op::SubAndTest(s) => {
                if v == MAX {
                    (Ret::Bool(false), None)
                } else if v == 0 {
                    (Ret::Bool(false), Some(MisuseKind::DecrementOnZero))
                } else if s > v {
                    (Ret::Bool(false), Some(MisuseKind::Underflow))
                } else {
                    self.value = v - s;
                    (Ret::Bool(self.value == 0), None)
                }
            }
            Op::DecAndTest => self.step(Op::SubAndTest(1)),
            Op::Sub(s) => match self.step(Op::SubAndTest(s)) {
                (Ret::Bool(true), _) => (Ret::Unit, Some(MisuseKind::DecrementToZeroWithoutTest)),
                (_, event) => (Ret::Unit, event),
            },
            Op::Dec => self.step(Op::Sub(1)),
            Op::DecIfOne => {
                if v == 1 {
                    self.value = 0;
                    (Ret::Bool(true), None)
                } else {
                    (Ret::Bool(false), None)
                }
            }
            Op::DecNotOne => match v {
                1 => (Ret::Bool(false), None),
                MAX => (Ret::Bool(true), None),
                0 => (Ret::Bool(true), Some(MisuseKind::DecrementOnZero)),
                _ => {
                    self.value = v - 1;
                    (Ret::Bool(true), None)
                }
            },
            Op::DecAndLock => match v {
                1 => {
                    self.value = 0;
                    (Ret::Bool(true), None)
                }
                0 => (Ret::Bool(false), Some(MisuseKind::DecrementOnZero)),
                MAX => (Ret::Bool(false), None),
                _ => {
                    self.value = v - 1;
                    (Ret::Bool(false), None)
                }
            },
        }
    }

    /// As [`step`](Self::step), but reports only what passes the per-kind
    /// warn-once latch.
    pub fn apply(&mut self, op: Op) -> (Ret, Option<MisuseKind>) {
        let (ret, detected) = self.step(op);
        let emitted = detected.filter(|kind| {
            if self.latched.contains(kind) {
                false
            } else {
                self.latched.push(*kind);
                true
            }
        });
        (ret, emitted)
    }
}

/// A counter under test together with its event log and lock.
pub struct Subject {
    pub counter: RefCount,
    pub events: Arc<Collector<MisuseEvent>>,
    pub lock: Mutex<()>,
}

impl Subject {
    pub fn new(value: u32) -> Self {
        let events = Collector::new();
        Self {
            counter: RefCount::new(value).with_sink(events.clone()),
            events,
            lock: Mutex::new(()),
        }
    }

    /// Runs `op` on the real counter; returns the result and the kinds of
    /// the events it emitted.
    pub fn apply(&self, op: Op) -> (Ret, Vec<MisuseKind>) {
        let c = &self.counter;
        let ret = match op {
            Op::Set(n) => {
                c.set(n);
                Ret::Unit
            }
            Op::Read => Ret::Value(c.read()),
            Op::AddNotZero(s) => Ret::Bool(c.add_not_zero(s)),
            Op::IncNotZero => Ret::Bool(c.inc_not_zero()),
            Op::Add(s) => {
                c.add(s);
                Ret::Unit
            }
            Op::Inc => {
                c.inc();
                Ret::Unit
            }
            Op::SubAndTest(s) => Ret::Bool(c.sub_and_test(s)),
            Op::DecAndTest => Ret::Bool(c.dec_and_test()),
            Op::Sub(s) => {
                c.sub(s);
                Ret::Unit
            }
            Op::Dec => {
                c.dec();
                Ret::Unit
            }
            Op::DecIfOne => Ret::Bool(c.dec_if_one()),
            Op::DecNotOne => Ret::Bool(c.dec_not_one()),
            Op::DecAndLock => {
                let guard = c.dec_and_lock(&self.lock);
                let held = guard.is_some();
                assert_eq!(
                    self.lock.try_lock().is_err(),
                    held,
                    "dec_and_lock must return with the lock held iff it returns true"
                );
                if held {
                    assert_eq!(c.read(), 0, "dec_and_lock returned true above zero");
                }
                Ret::Bool(held)
            }
        };
        let kinds = self.events.take().into_iter().map(|e| e.kind).collect();
        (ret, kinds)
    }
}

/// Operand values that sit on the interesting boundaries.
pub fn random_delta(rng: &mut impl Rng) -> u32 {
    match rng.gen_range(0..10) {
        0 => 0,
        1 => MAX,
        2 => MAX - 1,
        3 => MAX / 2,
        4 => rng.gen(),
        _ => rng.gen_range(1..=5),
    }
}

pub fn random_op(rng: &mut impl Rng) -> Op {
    match rng.gen_range(0..13) {
        0 => Op::Set(SEED_VALUES[rng.gen_range(0..SEED_VALUES.len())]),
        1 => Op::Read,
        2 => Op::AddNotZero(random_delta(rng)),
        3 => Op::IncNotZero,
        4 => Op::Add(random_delta(rng)),
        5 => Op::Inc,
        6 => Op::SubAndTest(random_delta(rng)),
        7 => Op::DecAndTest,
        8 => Op::Sub(random_delta(rng)),
        9 => Op::Dec,
        10 => Op::DecIfOne,
        11 => Op::DecNotOne,
        _ => Op::DecAndLock,
    }
}

/// Runs one sequence against model and implementation. Returns a
/// description of the first divergence, if any.
pub fn compare_sequence(start: u32, ops: &[Op]) -> Result<(), String> {
    let mut model = Model::new(start);
    let subject = Subject::new(start);
    for (i, &op) in ops.iter().enumerate() {
        let prior = model.value;
        let (want_ret, want_event) = model.apply(op);
        let (got_ret, got_events) = subject.apply(op);
        let got_value = subject.counter.read();
        let want_events: Vec<MisuseKind> = want_event.into_iter().collect();
        if want_ret != got_ret || model.value != got_value || want_events != got_events {
            return Err(format!(
                "step {i} {op:?} from {prior}: model ({want_ret:?}, {}, {want_events:?}) vs counter ({got_ret:?}, {got_value}, {got_events:?})",
                model.value
            ));
        }
    }
    Ok(())
}

#[test]
fn model_matches_documented_examples() {
    let cases: [(u32, Op, Ret, u32, Option<MisuseKind>); 12] = [
        (0, Op::AddNotZero(1), Ret::Bool(false), 0, None),
        (MAX, Op::AddNotZero(1), Ret::Bool(true), MAX, None),
        (MAX - 2, Op::AddNotZero(5), Ret::Bool(true), MAX, Some(MisuseKind::Saturated)),
        (7, Op::AddNotZero(3), Ret::Bool(true), 10, None),
        (0, Op::Add(4), Ret::Unit, 0, Some(MisuseKind::IncrementOnZero)),
        (3, Op::SubAndTest(7), Ret::Bool(false), 3, Some(MisuseKind::Underflow)),
        (0, Op::DecAndTest, Ret::Bool(false), 0, Some(MisuseKind::DecrementOnZero)),
        (1, Op::Dec, Ret::Unit, 0, Some(MisuseKind::DecrementToZeroWithoutTest)),
        (MAX, Op::DecNotOne, Ret::Bool(true), MAX, None),
        (1, Op::DecAndLock, Ret::Bool(true), 0, None),
        (3, Op::DecAndLock, Ret::Bool(false), 2, None),
        (MAX, Op::DecAndLock, Ret::Bool(false), MAX, None),
    ];
    for (start, op, ret, end, event) in cases {
        let mut m = Model::new(start);
        assert_eq!(m.step(op), (ret, event), "{start} {op:?}");
        assert_eq!(m.value, end, "{start} {op:?}");
    }
}
