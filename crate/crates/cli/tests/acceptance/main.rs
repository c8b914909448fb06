//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (no libtest harness) so the verdict lines are
//! always printed; the process exits non-zero if any criterion fails.

#[path = "../common/mod.rs"]
mod common;

mod faults;
mod golden;
mod laws;

use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

/// Shared state: the golden run is made once and reused by several criteria.
pub struct Ctx {
    pub out: tempfile::TempDir,
    golden: Option<Result<(PathBuf, Duration), String>>,
}

impl Ctx {
    /// Directory and wall time of the golden run.
    pub fn golden(&mut self) -> Result<(PathBuf, Duration), String> {
        if self.golden.is_none() {
            let started = Instant::now();
            let output = common::golden_run(
                common::GOLDEN_QUERY,
                self.out.path(),
                "golden",
                &common::fixture().join("pages"),
                &[],
            );
            let elapsed = started.elapsed();
            self.golden = Some(if output.status.success() {
                Ok((common::run_dir(self.out.path(), "golden"), elapsed))
            } else {
                Err(format!("golden run failed: {}", common::stderr(&output)))
            });
        }
        self.golden.clone().expect("set above")
    }
}

pub type Verdict = Result<String, String>;

fn main() -> ExitCode {
    let criteria: [(&str, fn(&mut Ctx) -> Verdict); 8] = [
        ("golden end-to-end run", golden::criterion_1),
        ("topic goldens", golden::criterion_2),
        ("crawler oracle equivalence", crawler_oracle::criterion_3),
        ("batching law", laws::criterion_4),
        ("cardinality and conservation invariants", laws::criterion_5),
        ("determinism", golden::criterion_6),
        ("invocation budget", golden::criterion_7),
        ("fault injection robustness", faults::criterion_8),
    ];
    let mut ctx = Ctx {
        out: tempfile::tempdir().expect("temp dir"),
        golden: None,
    };
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let verdict = panic::catch_unwind(AssertUnwindSafe(|| check(&mut ctx))).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        let took = started.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("criterion {} ({name}): PASS - {detail} [{took:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL - {detail} [{took:.1}s]", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
