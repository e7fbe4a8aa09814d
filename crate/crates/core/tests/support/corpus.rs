//! Expected scanner output for the fixture corpus.

use std::path::PathBuf;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// `(file, pattern, decl_line, release_line)` for every positive fixture.
pub const EXPECTED: [(&str, &str, usize, Option<usize>); 12] = [
    ("r1_atomic64_call_rcu.c", "r1", 8, Some(9)),
    ("r1_dec_and_lock.c", "r1", 5, Some(8)),
    ("r1_kfree.c", "r1", 15, Some(16)),
    ("r1_local_schedule_work.c", "r1", 3, Some(4)),
    ("r1_long_destroy.c", "r1", 4, Some(6)),
    ("r1_long_lock_queue_work.c", "r1", 3, Some(5)),
    ("r2_add_unless.c", "r2", 4, None),
    ("r2_atomic64_add_unless.c", "r2", 3, None),
    ("r3_add_return.c", "r3", 5, None),
    ("r3_long_add_return.c", "r3", 5, None),
    ("r4_alias_after.c", "r4", 5, Some(8)),
    ("r4_alias_before.c", "r4", 6, Some(7)),
];

/// The report message each family must produce.
pub fn expected_message(pattern: &str, release_line: Option<usize>) -> String {
    match pattern {
        "r1" | "r4" => format!(
            "atomic_dec_and_test variation before object free at line {}.",
            release_line.expect("r1/r4 carry a release line")
        ),
        "r2" => "atomic_add_unless".to_string(),
        "r3" => "x = atomic_add_return(-1, ...)".to_string(),
        other => panic!("unknown pattern {other}"),
    }
}
