mod support;

use std::sync::Arc;

use memguard::bounds::{
    AllocId, Bounds, BoundsError, CheckMode, Pool, ViolationKind, DEFAULT_POOL_START, POISON_FREE,
    SIZE_CLASSES,
};
use memguard::sink::{Collector, NullSink};
use rand::Rng;
use support::pool_oracle::{self, Block};

const EXTENT: usize = 1 << 18;

fn quiet_pool(mode: CheckMode) -> Pool {
    Pool::new(EXTENT, mode).unwrap().with_sink(Arc::new(NullSink))
}

fn blocks(pool: &Pool) -> Vec<Block> {
    pool.allocations()
        .map(|a| Block {
            base: a.base,
            capacity: a.capacity,
        })
        .collect()
}

/// Randomly allocates and frees until about `live` blocks exist.
fn populate(pool: &mut Pool, rng: &mut impl Rng, steps: usize) -> Vec<AllocId> {
    let mut ids = Vec::new();
    for _ in 0..steps {
        if !ids.is_empty() && rng.gen_bool(0.3) {
            let id = ids.swap_remove(rng.gen_range(0..ids.len()));
            pool.free(id).unwrap();
        } else if let Ok(a) = pool.alloc(rng.gen_range(1..=2048)) {
            ids.push(a.id);
        }
    }
    ids
}

fn smallest_class(size: usize) -> usize {
    *SIZE_CLASSES.iter().find(|&&c| c >= size).unwrap()
}

#[test]
fn round_up_is_sound_and_blocks_never_overlap() {
    let mut rng = support::rng(11);
    let mut pool = quiet_pool(CheckMode::Enforce);
    let mut ids = Vec::new();
    for step in 0..3_000 {
        if !ids.is_empty() && rng.gen_bool(0.4) {
            let id = ids.swap_remove(rng.gen_range(0..ids.len()));
            pool.free(id).unwrap();
        } else {
            let size = rng.gen_range(1..=SIZE_CLASSES[SIZE_CLASSES.len() - 1]);
            match pool.alloc(size) {
                Ok(a) => {
                    assert_eq!(a.requested, size);
                    assert_eq!(a.capacity, smallest_class(size), "size {size}");
                    assert_eq!(a.base % a.capacity, 0);
                    assert!(a.base >= DEFAULT_POOL_START);
                    assert!(a.end() <= DEFAULT_POOL_START + EXTENT);
                    ids.push(a.id);
                }
                Err(BoundsError::OutOfMemory { .. }) => {}
                Err(e) => panic!("step {step}: {e}"),
            }
        }
        let live = blocks(&pool);
        assert_eq!(live.len(), ids.len());
        assert_eq!(pool_oracle::overlaps(&live), 0, "step {step}");
    }
}

#[test]
fn derived_bounds_match_oracle() {
    let mut rng = support::rng(12);
    let mut pool = quiet_pool(CheckMode::Enforce);
    populate(&mut pool, &mut rng, 400);
    let live = blocks(&pool);
    for _ in 0..20_000 {
        let addr = DEFAULT_POOL_START - 64 + rng.gen_range(0..EXTENT + 128);
        let len = match rng.gen_range(0..4) {
            0 => 0,
            1 => rng.gen_range(1..16),
            2 => rng.gen_range(1..4096),
            _ => usize::MAX - rng.gen_range(0..4),
        };
        let want = pool_oracle::check(&live, addr, len);
        let got = pool
            .check_access(addr, len, "probe")
            .map_err(|e| e.violation().expect("violation").kind);
        assert_eq!(got, want, "addr {addr:#x} len {len}");

        let bounds = pool.load_bounds(addr);
        match pool_oracle::covering(&live, addr) {
            Some((lo, hi)) => assert_eq!(bounds, Bounds::new(lo, hi)),
            None => assert_eq!(bounds, Bounds::INFINITE),
        }
    }
}

#[test]
fn explicit_bounds_detect_underflow() {
    let mut rng = support::rng(13);
    let mut pool = quiet_pool(CheckMode::Enforce);
    populate(&mut pool, &mut rng, 200);
    let live = blocks(&pool);
    let mut lower = 0;
    for _ in 0..10_000 {
        let owner = live[rng.gen_range(0..live.len())];
        let bounds = Some((owner.base, owner.base + owner.capacity));
        let addr = owner.base - 64 + rng.gen_range(0..owner.capacity + 128);
        let len = rng.gen_range(0..256);
        let want = pool_oracle::check_against(bounds, addr, len);
        if want == Err(ViolationKind::LowerBound) {
            lower += 1;
        }
        let got = pool
            .check_with_bounds(Bounds::new(owner.base, owner.base + owner.capacity), addr, len, "probe")
            .map_err(|e| e.violation().unwrap().kind);
        assert_eq!(got, want, "addr {addr:#x} len {len} owner {owner:?}");
    }
    assert!(lower > 100, "lower-bound path barely exercised");
}

#[test]
fn enforce_copy_changes_memory_iff_both_operands_pass() {
    let mut rng = support::rng(14);
    let mut pool = quiet_pool(CheckMode::Enforce);
    populate(&mut pool, &mut rng, 120);
    let live = blocks(&pool);
    let (start, extent) = pool.extent();
    let in_arena = |addr: usize, n: usize| addr >= start && addr + n <= start + extent;
    let mut copied = 0;
    let mut refused = 0;
    for round in 0..2_000 {
        // Fill the arena with a fresh pattern so every copy is observable.
        let fill: Vec<u8> = (0..extent).map(|_| rng.gen()).collect();
        pool.write_bytes(start, &fill).unwrap();

        let pick = |rng: &mut rand_chacha::ChaCha8Rng| {
            let b = live[rng.gen_range(0..live.len())];
            b.base + rng.gen_range(0..b.capacity)
        };
        let src = pick(&mut rng);
        let dst = pick(&mut rng);
        let n = rng.gen_range(1..600);
        let allowed = pool_oracle::check(&live, src, n).is_ok()
            && pool_oracle::check(&live, dst, n).is_ok()
            && in_arena(src, n)
            && in_arena(dst, n);

        let result = pool.checked_copy(dst, src, n);
        let after = pool.read_bytes(start, extent).unwrap();
        let mut expected = fill.clone();
        if allowed {
            assert!(result.is_ok(), "round {round}: {result:?}");
            let (s, d) = (src - start, dst - start);
            expected.copy_within(s..s + n, d);
            copied += 1;
        } else {
            assert!(result.is_err(), "round {round}: copy of {n} from {src:#x} to {dst:#x} allowed");
            refused += 1;
        }
        assert!(after == &expected[..], "round {round}: arena mismatch");
    }
    assert!(copied > 100 && refused > 100, "copied {copied} refused {refused}");
}

#[test]
fn audit_logs_every_violation_and_proceeds() {
    let log = Collector::new();
    let mut pool = Pool::new(EXTENT, CheckMode::Audit)
        .unwrap()
        .with_sink(log.clone());
    let a = pool.alloc(100).unwrap();
    let b = pool.alloc(100).unwrap();
    pool.write_bytes(b.base, &[7; 128]).unwrap();
    pool.checked_copy(a.base, b.base, 200).unwrap();
    let lines: Vec<String> = log.take().iter().map(|v| v.to_string()).collect();
    assert_eq!(lines.len(), 2, "{lines:?}");
    assert!(lines.iter().all(|l| l.starts_with("BND Upper op=checked_copy")));
    assert_eq!(pool.read_bytes(a.base, 128).unwrap(), &[7; 128][..]);

    pool.checked_set(a.base + 120, 0, 16).unwrap();
    assert_eq!(log.len(), 1);
    assert!(pool.check_access(b.base, 129, "probe").is_ok());
    assert_eq!(log.len(), 2);
}

#[test]
fn freed_and_foreign_pointers_get_infinite_bounds() {
    let mut pool = quiet_pool(CheckMode::Enforce);
    let a = pool.alloc(64).unwrap();
    assert_eq!(pool.load_bounds(a.base + 10), a.bounds());
    pool.free(a.id).unwrap();
    assert_eq!(pool.load_bounds(a.base + 10), Bounds::INFINITE);
    assert_eq!(pool.read_bytes(a.base, 64).unwrap(), &[POISON_FREE; 64][..]);
    assert!(pool.check_access(a.base, 10_000, "stale").is_ok());
    assert_eq!(pool.load_bounds(0x10), Bounds::INFINITE);
    assert!(matches!(pool.free(a.id), Err(BoundsError::DoubleFree(_))));
    assert!(matches!(
        pool.free(AllocId(9_999)),
        Err(BoundsError::UnknownAllocation(_))
    ));
}

#[test]
fn move_handles_overlap_like_memmove() {
    let mut pool = quiet_pool(CheckMode::Enforce);
    let a = pool.alloc(64).unwrap();
    let data: Vec<u8> = (0..64).collect();
    pool.write_bytes(a.base, &data).unwrap();
    pool.checked_move(a.base + 8, a.base, 40).unwrap();
    let mut expected = data.clone();
    expected.copy_within(0..40, 8);
    assert_eq!(pool.read_bytes(a.base, 64).unwrap(), &expected[..]);
    let err = pool.checked_move(a.base + 32, a.base, 40).unwrap_err();
    assert_eq!(err.violation().unwrap().kind, ViolationKind::UpperBound);
    assert_eq!(pool.read_bytes(a.base, 64).unwrap(), &expected[..]);
}
