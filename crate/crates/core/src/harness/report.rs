use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use super::{Outcome, RunResult};

/// One row of a detection-rate table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentTable {
    pub test: String,
    pub runs: usize,
    pub injections: u64,
    pub detections: u64,
    pub errors: usize,
}

impl ExperimentTable {
    pub fn from_runs(test: &str, runs: &[RunResult]) -> Self {
        ExperimentTable {
            test: test.to_string(),
            runs: runs.len(),
            injections: runs.iter().map(|r| r.fault_injections).sum(),
            detections: runs.iter().map(|r| r.fault_detections).sum(),
            errors: runs.iter().filter(|r| r.outcome == Outcome::Error).count(),
        }
    }

    /// `(runs - errors) / runs` as a percentage.
    pub fn rate(&self) -> f64 {
        if self.runs == 0 {
            return 100.0;
        }
        (self.runs - self.errors) as f64 * 100.0 / self.runs as f64
    }

    pub fn row(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.test,
            self.runs,
            self.injections,
            self.detections,
            self.errors,
            format_rate(self.rate())
        )
    }
}

/// `98%`, or one decimal when the rate is not whole: `97.6%`.
pub fn format_rate(pct: f64) -> String {
    let tenths = (pct * 10.0).round() as i64;
    if tenths % 10 == 0 {
        format!("{}%", tenths / 10)
    } else {
        format!("{}.{}%", tenths / 10, tenths % 10)
    }
}

pub const TABLE_HEADER: &str = "Test\tRuns\tFault injections\tFault detections\tErrors\tRate";

pub fn table_text(tables: &[ExperimentTable]) -> String {
    let mut s = String::from(TABLE_HEADER);
    s.push('\n');
    for t in tables {
        s.push_str(&t.row());
        s.push('\n');
    }
    s
}

pub fn write_table_tsv(path: &Path, tables: &[ExperimentTable]) -> io::Result<()> {
    fs::write(path, table_text(tables))
}

pub const RUNS_HEADER: &str =
    "Test\tRun\tSeed\tOutcome\tInjections\tDetections\tAborted\tDigests\tApplied\tMaxDivergedPerWindow\tSendsAfterAbort";

pub fn runs_text(runs: &[(String, Vec<RunResult>)]) -> String {
    let mut s = String::from(RUNS_HEADER);
    s.push('\n');
    for (test, list) in runs {
        for r in list {
            let aborted: Vec<String> = r.aborted_replicas.iter().map(|a| a.to_string()).collect();
            let digests: Vec<String> = r
                .final_digests
                .iter()
                .map(|(id, d)| format!("{id}:{d:016x}"))
                .collect();
            let applied: Vec<String> = r
                .applied_counts
                .iter()
                .map(|(id, c)| format!("{id}:{c}"))
                .collect();
            writeln!(
                s,
                "{test}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.run_index,
                r.seed,
                r.outcome.as_str(),
                r.fault_injections,
                r.fault_detections,
                if aborted.is_empty() { "-".into() } else { aborted.join(",") },
                digests.join(","),
                applied.join(","),
                r.analysis.max_diverged_in_window,
                r.analysis.total_sends_after_abort()
            )
            .expect("writing to a String");
        }
    }
    s
}

pub fn write_runs_tsv(path: &Path, runs: &[(String, Vec<RunResult>)]) -> io::Result<()> {
    fs::write(path, runs_text(runs))
}
