//! Micro-benchmarks for the cost of the checks.
//!
//! Two comparisons, each against a baseline timed in the same run:
//!
//! * plain wrapping atomic increment vs. the saturating increment;
//! * an unchecked copy vs. a checked copy with bounds already in hand vs. a
//!   checked copy that loads bounds from allocator metadata on every call.
//!
//! Each variant runs `REPETITIONS` timed batches after one warm-up batch;
//! variants are interleaved batch by batch so drift hits them equally, and
//! the median batch is reported. Results are nanoseconds, not cycles, and
//! depend on the machine; threads are not pinned, so run on an idle box.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::bounds::{BoundsError, CheckMode, Pool, SIZE_CLASSES};
use crate::refcount::RefCount;
use crate::sink::NullSink;

pub const DEFAULT_ITERATIONS: u64 = 1_000_000;
pub const REPETITIONS: usize = 11;
pub const COPY_SIZES: [usize; 2] = [256, 65536];
/// Floor on per-batch copies for the largest sizes.
pub const MIN_COPY_ITERATIONS: u64 = 1_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub name: String,
    /// Bytes per operation, for copy benchmarks.
    pub bytes: Option<usize>,
    pub iterations: u64,
    pub repetitions: usize,
    /// Median over batches.
    pub ns_per_op: f64,
    pub ratio_to_baseline: f64,
}

impl BenchResult {
    /// Relative overhead against the baseline, in percent.
    pub fn overhead_percent(&self) -> f64 {
        (self.ratio_to_baseline - 1.0) * 100.0
    }
}

/// The three copy variants for one size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CopyBench {
    pub bytes: usize,
    pub raw: BenchResult,
    pub bounds_known: BenchResult,
    pub bounds_loaded: BenchResult,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("iteration count must be at least 1")]
    ZeroIterations,
    #[error("timer resolution {resolution:?} is not below 1% of a {batch:?} batch; raise the iteration count")]
    TimerTooCoarse { resolution: Duration, batch: Duration },
    #[error("benchmark pool setup failed: {0}")]
    Pool(#[from] BoundsError),
}

/// Smallest non-zero step observed between consecutive clock reads.
pub fn timer_resolution() -> Duration {
    let mut best = Duration::MAX;
    for _ in 0..200 {
        let start = Instant::now();
        let mut now = Instant::now();
        while now == start {
            now = Instant::now();
        }
        best = best.min(now - start);
    }
    best
}

/// Times `variants` in interleaved batches and returns each one's median
/// nanoseconds per operation.
fn measure(iterations: u64, variants: &mut [&mut dyn FnMut(u64)]) -> Result<Vec<f64>, BenchError> {
    if iterations == 0 {
        return Err(BenchError::ZeroIterations);
    }
    let resolution = timer_resolution();
    for run in variants.iter_mut() {
        run(iterations);
    }
    let mut samples = vec![Vec::with_capacity(REPETITIONS); variants.len()];
    for _ in 0..REPETITIONS {
        for (run, samples) in variants.iter_mut().zip(samples.iter_mut()) {
            let start = Instant::now();
            run(iterations);
            let batch = start.elapsed();
            if resolution.as_nanos() * 100 >= batch.as_nanos() {
                return Err(BenchError::TimerTooCoarse { resolution, batch });
            }
            samples.push(batch.as_nanos() as f64 / iterations as f64);
        }
    }
    Ok(samples.into_iter().map(median).collect())
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

fn result(name: &str, bytes: Option<usize>, iterations: u64, ns: f64, baseline: f64) -> BenchResult {
    BenchResult {
        name: name.to_string(),
        bytes,
        iterations,
        repetitions: REPETITIONS,
        ns_per_op: ns,
        ratio_to_baseline: ns / baseline,
    }
}

/// Plain atomic increment (checks off) vs. saturating increment.
///
/// Counters restart at 1 before every batch, so neither the zero nor the
/// saturation path is taken as long as `iterations` stays far below
/// `u32::MAX`.
pub fn bench_refcount(iterations: u64) -> Result<[BenchResult; 2], BenchError> {
    if iterations == 0 {
        return Err(BenchError::ZeroIterations);
    }
    let plain = RefCount::unchecked(1);
    let checked = RefCount::new(1).with_sink(std::sync::Arc::new(NullSink));

    let mut run_plain = |n: u64| {
        plain.set(1);
        for _ in 0..n {
            black_box(&plain).inc();
        }
    };
    let mut run_checked = |n: u64| {
        checked.set(1);
        for _ in 0..n {
            black_box(&checked).inc();
        }
    };
    let ns = measure(iterations, &mut [&mut run_plain, &mut run_checked])?;
    Ok([
        result("atomic_inc", None, iterations, ns[0], ns[0]),
        result("refcount_inc", None, iterations, ns[1], ns[0]),
    ])
}

/// Copies per batch for `size` bytes: `iterations` for the smallest size,
/// scaled down by size so each batch moves a similar number of bytes.
pub fn copy_iterations(iterations: u64, smallest: usize, size: usize) -> u64 {
    (iterations.saturating_mul(smallest as u64) / size.max(1) as u64).max(MIN_COPY_ITERATIONS)
}

/// Unchecked copy vs. checked copy with known bounds vs. checked copy that
/// looks bounds up per call, for every size in `sizes`.
pub fn bench_copy(sizes: &[usize], iterations: u64) -> Result<Vec<CopyBench>, BenchError> {
    if iterations == 0 {
        return Err(BenchError::ZeroIterations);
    }
    let largest = sizes.iter().copied().max().unwrap_or(0);
    let smallest = sizes.iter().copied().min().unwrap_or(1);
    let mut classes: Vec<usize> = SIZE_CLASSES.to_vec();
    let mut class = SIZE_CLASSES[SIZE_CLASSES.len() - 1];
    while class < largest {
        class *= 2;
        classes.push(class);
    }

    let mut out = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let extent = 4 * classes[classes.len() - 1] + 1;
        let mut pool = Pool::with_size_classes(extent, CheckMode::Enforce, &classes)?
            .with_sink(std::sync::Arc::new(NullSink));
        let src = pool.alloc(size)?;
        let dst = pool.alloc(size)?;
        // Neighbours make the metadata lookup walk a non-trivial tree.
        for _ in 0..16 {
            let _ = pool.alloc(64);
        }
        let pattern: Vec<u8> = (0..size).map(|i| i as u8).collect();
        pool.write_bytes(src.base, &pattern)?;
        let (src_bounds, dst_bounds) = (src.bounds(), dst.bounds());
        let n = copy_iterations(iterations, smallest, size);

        let pool = std::cell::RefCell::new(pool);
        let mut raw = |k: u64| {
            let mut pool = pool.borrow_mut();
            for _ in 0..k {
                black_box(pool.copy_unchecked(black_box(dst.base), black_box(src.base), size)).ok();
            }
        };
        let mut known = |k: u64| {
            let mut pool = pool.borrow_mut();
            for _ in 0..k {
                black_box(pool.checked_copy_with_bounds(
                    black_box(dst.base),
                    dst_bounds,
                    black_box(src.base),
                    src_bounds,
                    size,
                ))
                .ok();
            }
        };
        let mut loaded = |k: u64| {
            let mut pool = pool.borrow_mut();
            for _ in 0..k {
                black_box(pool.checked_copy(black_box(dst.base), black_box(src.base), size)).ok();
            }
        };
        let ns = measure(n, &mut [&mut raw, &mut known, &mut loaded])?;
        debug_assert_eq!(
            pool.borrow().read_bytes(dst.base, size).ok(),
            Some(&pattern[..])
        );
        out.push(CopyBench {
            bytes: size,
            raw: result("memcpy", Some(size), n, ns[0], ns[0]),
            bounds_known: result("checked_copy (bounds known)", Some(size), n, ns[1], ns[0]),
            bounds_loaded: result("checked_copy (bounds loaded)", Some(size), n, ns[2], ns[0]),
        });
    }
    Ok(out)
}

/// Aligned text table of `results`.
pub fn render_table(results: &[BenchResult]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<30} {:>8} {:>12} {:>12} {:>8} {:>10}",
        "benchmark", "bytes", "iterations", "ns/op", "ratio", "overhead"
    );
    for r in results {
        let bytes = r.bytes.map_or_else(|| "-".to_string(), |b| b.to_string());
        let _ = writeln!(
            out,
            "{:<30} {:>8} {:>12} {:>12.3} {:>8.2} {:>+9.1}%",
            r.name,
            bytes,
            r.iterations,
            r.ns_per_op,
            r.ratio_to_baseline,
            r.overhead_percent()
        );
    }
    out
}
