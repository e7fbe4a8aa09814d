//! Pluggable destinations for diagnostic records.
//!
//! Both the reference counter ([`MisuseEvent`](crate::refcount::MisuseEvent))
//! and the bounds checker ([`Violation`](crate::bounds::Violation)) report
//! through a [`Sink`]. Sinks may be invoked from any thread and must do their
//! own synchronization. A sink must never call back into the object that is
//! reporting to it.

use std::fmt::Display;
use std::io::Write;
use std::sync::{Arc, Mutex, PoisonError};

pub trait Sink<E>: Send + Sync {
    fn report(&self, record: &E);
}

impl<E, F> Sink<E> for F
where
    F: Fn(&E) + Send + Sync,
{
    fn report(&self, record: &E) {
        self(record)
    }
}

/// Writes each record's `Display` form as one line on standard error.
#[derive(Debug, Default, Clone, Copy)]
pub struct StderrSink;

impl<E: Display> Sink<E> for StderrSink {
    fn report(&self, record: &E) {
        let stderr = std::io::stderr();
        let mut lock = stderr.lock();
        // Reporting must not fail the operation being reported on.
        let _ = writeln!(lock, "{record}");
    }
}

/// Discards every record.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl<E> Sink<E> for NullSink {
    fn report(&self, _record: &E) {}
}

/// Keeps every record in memory, in arrival order.
#[derive(Debug)]
pub struct Collector<E> {
    records: Mutex<Vec<E>>,
}

impl<E> Default for Collector<E> {
    fn default() -> Self {
        Self {
            records: Mutex::new(Vec::new()),
        }
    }
}

impl<E: Clone> Collector<E> {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn snapshot(&self) -> Vec<E> {
        self.records
            .lock()
            .unwrap_or_else(PoisonError::into_inner)
            .clone()
    }

    pub fn take(&self) -> Vec<E> {
        std::mem::take(&mut *self.records.lock().unwrap_or_else(PoisonError::into_inner))
    }

    pub fn len(&self) -> usize {
        self.records
            .lock()
            .unwrap_or_else(PoisonError::into_inner)
            .len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<E: Clone + Send> Sink<E> for Collector<E> {
    fn report(&self, record: &E) {
        self.records
            .lock()
            .unwrap_or_else(PoisonError::into_inner)
            .push(record.clone());
    }
}
