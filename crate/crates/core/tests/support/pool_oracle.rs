//! Brute-force bounds oracle: a flat list of live blocks, scanned linearly.

use memguard::bounds::ViolationKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub base: usize,
    pub capacity: usize,
}

/// `Some((lo, hi))` for the block covering `addr`, `None` for unknown
/// addresses (which admit every access).
pub fn covering(blocks: &[Block], addr: usize) -> Option<(usize, usize)> {
    let mut hits = blocks
        .iter()
        .filter(|b| b.base <= addr && addr < b.base + b.capacity)
        .map(|b| (b.base, b.base + b.capacity));
    let first = hits.next();
    assert!(hits.next().is_none(), "overlapping blocks cover {addr:#x}");
    first
}

/// Verdict for `[addr, addr + len)` against explicit bounds.
pub fn check_against(bounds: Option<(usize, usize)>, addr: usize, len: usize) -> Result<(), ViolationKind> {
    let Some((lo, hi)) = bounds else {
        return Ok(());
    };
    if len == 0 {
        return Ok(());
    }
    if addr < lo {
        return Err(ViolationKind::LowerBound);
    }
    if (addr as u128) + (len as u128) > hi as u128 {
        return Err(ViolationKind::UpperBound);
    }
    Ok(())
}

/// Verdict for `[addr, addr + len)` with bounds derived from `addr`.
pub fn check(blocks: &[Block], addr: usize, len: usize) -> Result<(), ViolationKind> {
    check_against(covering(blocks, addr), addr, len)
}

/// Pairs of blocks whose `[base, base + capacity)` intervals intersect.
pub fn overlaps(blocks: &[Block]) -> usize {
    let mut count = 0;
    for (i, a) in blocks.iter().enumerate() {
        for b in &blocks[i + 1..] {
            if a.base < b.base + b.capacity && b.base < a.base + a.capacity {
                count += 1;
            }
        }
    }
    count
}
