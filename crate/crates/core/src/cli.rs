//! The `memguard` command line.
//!
//! ```text
//! memguard scan <paths...> [--format text|json] [--release-regex R]...
//! memguard bench [--iterations N] [--json]
//! memguard demo-bounds [--audit]
//! ```
//!
//! Exit codes: `scan` returns 0 when clean, 1 with findings, 2 on scan
//! errors; `demo-bounds` returns 1 when the overrun is blocked; usage errors
//! return 64. `MEMGUARD_COLOR=1` enables ANSI color.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use crate::bench::{self, BenchError};
use crate::bounds::{CheckMode, Pool, Violation};
use crate::scanner::{self, PatternConfig, ScanReport};
use crate::sink::Collector;

pub const EXIT_USAGE: i32 = 64;
pub const COLOR_ENV: &str = "MEMGUARD_COLOR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "memguard", version, about = "Reference-counter and bounds-checking toolkit")]
pub struct CliConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Report atomic_t variables used as reference counters in C sources.
    Scan {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Extra release-function name pattern, matched with any arguments.
        #[arg(long = "release-regex", value_name = "R")]
        release_regex: Vec<String>,
    },
    /// Time saturating vs plain increments and checked vs raw copies.
    Bench {
        #[arg(long, default_value_t = bench::DEFAULT_ITERATIONS)]
        iterations: u64,
        #[arg(long)]
        json: bool,
    },
    /// Overrun a 128-byte buffer with a 200-byte checked copy.
    DemoBounds {
        /// Log the violation and let the copy proceed.
        #[arg(long)]
        audit: bool,
    },
}

fn color_enabled() -> bool {
    std::env::var(COLOR_ENV).is_ok_and(|v| v == "1")
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match CliConfig::try_parse_from(args) {
        Ok(config) => config,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    let color = color_enabled();
    let result = match config.command {
        Command::Scan {
            paths,
            format,
            release_regex,
        } => run_scan(&paths, format, &release_regex, color, out, err),
        Command::Bench { iterations, json } => run_bench(iterations, json, out, err),
        Command::DemoBounds { audit } => run_demo(audit, color, out),
    };
    result.unwrap_or_else(|e| {
        let _ = writeln!(err, "memguard: {e}");
        2
    })
}

fn run_scan(
    paths: &[PathBuf],
    format: Format,
    release_regex: &[String],
    color: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> std::io::Result<i32> {
    let mut config = PatternConfig::default();
    for pattern in release_regex {
        if let Err(e) = config.add_release_regex(pattern) {
            writeln!(err, "memguard: invalid --release-regex {pattern:?}: {e}")?;
            return Ok(EXIT_USAGE);
        }
    }

    let mut report = ScanReport::default();
    for path in paths {
        match scanner::scan_tree(path, &config) {
            Ok(r) => report.merge(r),
            Err(e) => report.errors.push(e),
        }
    }

    match format {
        Format::Text => out.write_all(report.render_text(color).as_bytes())?,
        Format::Json => out.write_all(report.render_json_lines().as_bytes())?,
    }
    for e in &report.errors {
        writeln!(err, "memguard: {e}")?;
    }
    Ok(report.exit_code())
}

fn run_bench(iterations: u64, json: bool, out: &mut dyn Write, err: &mut dyn Write) -> std::io::Result<i32> {
    let results = bench::bench_refcount(iterations)
        .and_then(|rc| Ok((rc, bench::bench_copy(&bench::COPY_SIZES, iterations)?)));
    let (refcount, copy) = match results {
        Ok(r) => r,
        Err(BenchError::ZeroIterations) => {
            writeln!(err, "memguard: --iterations must be at least 1")?;
            return Ok(EXIT_USAGE);
        }
        Err(e) => {
            writeln!(err, "memguard: {e}")?;
            return Ok(2);
        }
    };

    if json {
        let doc = serde_json::json!({ "refcount": refcount, "copy": copy });
        writeln!(out, "{doc}")?;
    } else {
        writeln!(out, "reference counter")?;
        out.write_all(bench::render_table(&refcount).as_bytes())?;
        writeln!(out)?;
        writeln!(out, "memory copy")?;
        let rows: Vec<_> = copy
            .iter()
            .flat_map(|c| [c.raw.clone(), c.bounds_known.clone(), c.bounds_loaded.clone()])
            .collect();
        out.write_all(bench::render_table(&rows).as_bytes())?;
    }
    Ok(0)
}

fn run_demo(audit: bool, color: bool, out: &mut dyn Write) -> std::io::Result<i32> {
    let mode = if audit { CheckMode::Audit } else { CheckMode::Enforce };
    let log: Arc<Collector<Violation>> = Collector::new();
    let mut pool = Pool::new(1 << 20, mode)
        .and_then(|p| Ok(p.with_sink(log.clone())))
        .expect("demo pool");
    let dst = pool.alloc(128).expect("demo alloc");
    let src = pool.alloc(200).expect("demo alloc");
    pool.write_bytes(src.base, &[0x41; 200]).expect("demo fill");

    writeln!(
        out,
        "dst: base={:#x} requested={} bounds={}",
        dst.base,
        dst.requested,
        pool.load_bounds(dst.base)
    )?;
    writeln!(
        out,
        "src: base={:#x} requested={} bounds={}",
        src.base,
        src.requested,
        pool.load_bounds(src.base)
    )?;
    writeln!(out, "checked_copy(dst, src, 200) in {mode:?} mode")?;

    let before = pool.read_bytes(dst.base, dst.capacity).expect("dst").to_vec();
    let result = pool.checked_copy(dst.base, src.base, 200);

    for violation in log.snapshot() {
        if color {
            writeln!(out, "\x1b[1;31m{violation}\x1b[0m")?;
        } else {
            writeln!(out, "{violation}")?;
        }
    }
    match result {
        Err(_) => {
            let unchanged = pool.read_bytes(dst.base, dst.capacity).expect("dst") == &before[..];
            writeln!(
                out,
                "copy blocked; destination {}",
                if unchanged { "unchanged" } else { "MODIFIED" }
            )?;
            Ok(1)
        }
        Ok(()) => {
            writeln!(out, "violation logged; copy completed")?;
            Ok(0)
        }
    }
}
