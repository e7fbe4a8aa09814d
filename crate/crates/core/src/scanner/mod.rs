//! Finds `atomic_t` variables that behave like reference counters.
//!
//! Four pattern families are recognized inside C function bodies:
//!
//! | id | shape |
//! |----|-------|
//! | r1 | `atomic_dec_and_test(&obj->x)` (or a variant), later a free of `obj` or a destroy/del/work/rcu call |
//! | r4 | as r1, but the free takes an alias `y` assigned from `obj` |
//! | r2 | `atomic_add_unless(&obj->x, -1, 1)` |
//! | r3 | `x = atomic_add_return(-1, ...)` |
//!
//! Each hit is a candidate for conversion to a saturating counter and still
//! needs a human to confirm it. Matching is token based, so macros are not
//! expanded and control flow is ignored.

mod lex;
mod patterns;

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use regex::Regex;
use serde::Serialize;
use thiserror::Error;
use walkdir::WalkDir;

/// Decrement functions whose `true` return hands over the last reference.
pub const DEFAULT_DECREMENT_FUNCTIONS: [&str; 6] = [
    "atomic_dec_and_test",
    "atomic_dec_and_lock",
    "atomic_long_dec_and_lock",
    "atomic_long_dec_and_test",
    "atomic64_dec_and_test",
    "local_dec_and_test",
];

/// Release calls that must take the counted object as first argument.
pub const DEFAULT_OBJECT_RELEASE: [&str; 1] = [".*free.*"];

/// Release calls accepted with any arguments.
pub const DEFAULT_ANY_RELEASE: [&str; 5] = [
    ".*destroy.*",
    ".*del.*",
    ".*queue_work.*",
    ".*schedule_work.*",
    ".*call_rcu.*",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Pattern {
    #[serde(rename = "r1")]
    DecAndTestThenFree,
    #[serde(rename = "r4")]
    DecAndTestAliasThenFree,
    #[serde(rename = "r2")]
    AddUnlessMinusOneOne,
    #[serde(rename = "r3")]
    AddReturnMinusOne,
}

impl Pattern {
    pub const ALL: [Pattern; 4] = [
        Pattern::DecAndTestThenFree,
        Pattern::DecAndTestAliasThenFree,
        Pattern::AddUnlessMinusOneOne,
        Pattern::AddReturnMinusOne,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Pattern::DecAndTestThenFree => "r1",
            Pattern::DecAndTestAliasThenFree => "r4",
            Pattern::AddUnlessMinusOneOne => "r2",
            Pattern::AddReturnMinusOne => "r3",
        }
    }

    /// The report string for a hit of this pattern.
    pub fn message(self, release_line: Option<usize>) -> String {
        match self {
            Pattern::DecAndTestThenFree | Pattern::DecAndTestAliasThenFree => format!(
                "atomic_dec_and_test variation before object free at line {}.",
                release_line.unwrap_or_default()
            ),
            Pattern::AddUnlessMinusOneOne => "atomic_add_unless".to_string(),
            Pattern::AddReturnMinusOne => "x = atomic_add_return(-1, ...)".to_string(),
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// `High` for the exact `&obj->field` argument shape, `Low` for counters
/// that are plain variables or nested members.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    High,
    Low,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScanFinding {
    pub file: PathBuf,
    /// Line of the atomic call.
    pub decl_line: usize,
    /// Line of the release call, for r1 and r4.
    pub release_line: Option<usize>,
    pub pattern: Pattern,
    pub message: String,
    pub confidence: Confidence,
}

impl fmt::Display for ScanFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}: {}: {}",
            self.file.display(),
            self.decl_line,
            self.pattern,
            self.message
        )
    }
}

#[derive(Debug, Clone)]
pub struct PatternConfig {
    pub decrement_functions: Vec<String>,
    pub object_release: Vec<Regex>,
    pub any_release: Vec<Regex>,
}

impl Default for PatternConfig {
    fn default() -> Self {
        let compile = |p: &&str| Regex::new(p).expect("built-in pattern");
        Self {
            decrement_functions: DEFAULT_DECREMENT_FUNCTIONS.iter().map(|s| s.to_string()).collect(),
            object_release: DEFAULT_OBJECT_RELEASE.iter().map(compile).collect(),
            any_release: DEFAULT_ANY_RELEASE.iter().map(compile).collect(),
        }
    }
}

impl PatternConfig {
    /// Adds a release-name pattern accepted with any arguments.
    pub fn add_release_regex(&mut self, pattern: &str) -> Result<(), regex::Error> {
        self.any_release.push(Regex::new(pattern)?);
        Ok(())
    }

    pub fn add_decrement_function(&mut self, name: impl Into<String>) {
        self.decrement_functions.push(name.into());
    }

    fn is_decrement(&self, name: &str) -> bool {
        self.decrement_functions.iter().any(|f| f == name)
    }

    fn is_object_release(&self, name: &str) -> bool {
        self.object_release.iter().any(|r| r.is_match(name))
    }

    fn is_any_release(&self, name: &str) -> bool {
        self.any_release.iter().any(|r| r.is_match(name))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScanError {
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("{}: binary content, skipped", path.display())]
    Binary { path: PathBuf },
}

impl ScanError {
    pub fn path(&self) -> &Path {
        match self {
            ScanError::Io { path, .. } | ScanError::Binary { path } => path,
        }
    }
}

/// Scans C source text. `file` only labels the findings.
pub fn scan_source(file: &Path, source: &str, config: &PatternConfig) -> Vec<ScanFinding> {
    let tokens = lex::tokenize(&lex::strip(source));
    let mut findings: Vec<ScanFinding> = patterns::function_bodies(&tokens)
        .into_iter()
        .flat_map(|body| patterns::match_body(&tokens, body, config))
        .map(|raw| ScanFinding {
            file: file.to_path_buf(),
            decl_line: raw.decl_line,
            release_line: raw.release_line,
            pattern: raw.pattern,
            message: raw.pattern.message(raw.release_line),
            confidence: raw.confidence,
        })
        .collect();
    findings.sort_by_key(|f| (f.decl_line, f.pattern, f.release_line));
    findings
}

pub fn scan_file(path: &Path, config: &PatternConfig) -> Result<Vec<ScanFinding>, ScanError> {
    let bytes = std::fs::read(path).map_err(|e| ScanError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if bytes.contains(&0) {
        return Err(ScanError::Binary {
            path: path.to_path_buf(),
        });
    }
    Ok(scan_source(path, &String::from_utf8_lossy(&bytes), config))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileFindings {
    pub path: PathBuf,
    pub findings: Vec<ScanFinding>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScanReport {
    /// Files with at least one finding, in path order.
    pub files: Vec<FileFindings>,
    pub errors: Vec<ScanError>,
    pub files_scanned: usize,
}

impl ScanReport {
    pub fn findings(&self) -> impl Iterator<Item = &ScanFinding> + '_ {
        self.files.iter().flat_map(|f| f.findings.iter())
    }

    pub fn total(&self) -> usize {
        self.files.iter().map(|f| f.findings.len()).sum()
    }

    pub fn counts(&self) -> BTreeMap<Pattern, usize> {
        let mut counts: BTreeMap<Pattern, usize> = Pattern::ALL.iter().map(|&p| (p, 0)).collect();
        for finding in self.findings() {
            *counts.entry(finding.pattern).or_default() += 1;
        }
        counts
    }

    /// 0 when clean, 1 when anything was found, 2 when any file failed.
    pub fn exit_code(&self) -> i32 {
        if !self.errors.is_empty() {
            2
        } else if self.total() > 0 {
            1
        } else {
            0
        }
    }

    pub fn merge(&mut self, other: ScanReport) {
        self.files.extend(other.files);
        self.errors.extend(other.errors);
        self.files_scanned += other.files_scanned;
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        self.errors.sort_by(|a, b| a.path().cmp(b.path()));
    }

    /// One `<path>:<line>: <id>: <message>` line per finding, then a summary.
    pub fn render_text(&self, color: bool) -> String {
        let mut out = String::new();
        for finding in self.findings() {
            if color {
                let _ = writeln!(
                    out,
                    "{}:{}: \x1b[1;33m{}\x1b[0m: {}",
                    finding.file.display(),
                    finding.decl_line,
                    finding.pattern,
                    finding.message
                );
            } else {
                let _ = writeln!(out, "{finding}");
            }
        }
        let counts = self.counts();
        let _ = writeln!(
            out,
            "{} finding(s) in {} file(s) scanned: r1={} r4={} r2={} r3={}; {} error(s)",
            self.total(),
            self.files_scanned,
            counts[&Pattern::DecAndTestThenFree],
            counts[&Pattern::DecAndTestAliasThenFree],
            counts[&Pattern::AddUnlessMinusOneOne],
            counts[&Pattern::AddReturnMinusOne],
            self.errors.len()
        );
        out
    }

    /// One JSON object per finding, one per line.
    pub fn render_json_lines(&self) -> String {
        self.findings()
            .map(|f| serde_json::to_string(f).expect("finding serializes") + "\n")
            .collect()
    }
}

fn is_c_source(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("c" | "h"))
}

/// Scans every `*.c` and `*.h` under `root` (or `root` itself if it is a
/// file). Unreadable files are collected as errors and the scan goes on.
/// Files are scanned in parallel; the report is ordered by path, then line.
pub fn scan_tree(root: &Path, config: &PatternConfig) -> Result<ScanReport, ScanError> {
    let metadata = std::fs::metadata(root).map_err(|e| ScanError::Io {
        path: root.to_path_buf(),
        message: e.to_string(),
    })?;

    let mut errors = Vec::new();
    let paths: Vec<PathBuf> = if metadata.is_file() {
        vec![root.to_path_buf()]
    } else {
        let mut paths = Vec::new();
        for entry in WalkDir::new(root).sort_by_file_name() {
            match entry {
                Ok(entry) if entry.file_type().is_file() && is_c_source(entry.path()) => {
                    paths.push(entry.into_path())
                }
                Ok(_) => {}
                Err(e) => errors.push(ScanError::Io {
                    path: e.path().map_or_else(|| root.to_path_buf(), Path::to_path_buf),
                    message: e.to_string(),
                }),
            }
        }
        paths.sort();
        paths
    };

    let results: Vec<(PathBuf, Result<Vec<ScanFinding>, ScanError>)> = paths
        .par_iter()
        .map(|path| (path.clone(), scan_file(path, config)))
        .collect();

    let mut report = ScanReport {
        files_scanned: paths.len(),
        ..ScanReport::default()
    };
    for (path, result) in results {
        match result {
            Ok(findings) if findings.is_empty() => {}
            Ok(findings) => report.files.push(FileFindings { path, findings }),
            Err(e) => errors.push(e),
        }
    }
    errors.sort_by(|a, b| a.path().cmp(b.path()));
    report.errors = errors;
    Ok(report)
}
