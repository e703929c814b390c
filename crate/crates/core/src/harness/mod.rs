//! Experiment manager: seeded runs of a scenario, outcome classification
//! and detection-rate tables.

pub mod analysis;
pub mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::fault::Scenario;
use crate::paxos::ReplicaId;
use crate::sim::{RunEnd, SimOptions, Simulation};

pub use analysis::{analyze_trace, TraceAnalysis};
pub use report::{format_rate, write_runs_tsv, write_table_tsv, ExperimentTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Outcome {
    Ok,
    Detected,
    Error,
    Timeout,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Ok => "OK",
            Outcome::Detected => "DETECTED",
            Outcome::Error => "ERROR",
            Outcome::Timeout => "TIMEOUT",
        }
    }
}

/// End state of one surviving replica, as compared by [`classify_run`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Survivor<'a> {
    pub id: ReplicaId,
    pub applied_count: u64,
    pub digest: u64,
    /// Digest of each applied value, in slot order.
    pub applied: &'a [u64],
}

/// True when two survivors hold different states: different digests at
/// equal transition counts, or different applied values on the common
/// slot prefix.
pub fn disagree(a: &Survivor<'_>, b: &Survivor<'_>) -> bool {
    if a.applied_count == b.applied_count {
        return a.digest != b.digest;
    }
    let k = a.applied.len().min(b.applied.len());
    a.applied[..k] != b.applied[..k]
}

/// ERROR beats TIMEOUT beats DETECTED beats OK.
pub fn classify_run(survivors: &[Survivor<'_>], timed_out: bool, detections: usize) -> Outcome {
    for (i, a) in survivors.iter().enumerate() {
        if survivors[i + 1..].iter().any(|b| disagree(a, b)) {
            return Outcome::Error;
        }
    }
    if timed_out {
        Outcome::Timeout
    } else if detections > 0 {
        Outcome::Detected
    } else {
        Outcome::Ok
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunResult {
    pub run_index: usize,
    pub seed: u64,
    pub fault_injections: u64,
    pub fault_detections: u64,
    pub outcome: Outcome,
    pub aborted_replicas: BTreeSet<ReplicaId>,
    pub final_digests: BTreeMap<ReplicaId, u64>,
    pub applied_counts: BTreeMap<ReplicaId, u64>,
    /// Injection firings per replica.
    pub injected_replicas: BTreeSet<ReplicaId>,
    pub end: Option<RunEnd>,
    pub end_time_ms: u64,
    pub log_digest: u64,
    pub log_lines: u64,
    pub analysis: TraceAnalysis,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub sim: SimOptions,
    /// Per-run artifacts go to `<out>/run-<index>/`.
    pub out_dir: Option<PathBuf>,
    /// Keep the full event log in memory for the caller.
    pub keep_log: bool,
}

/// A run together with its event log, when requested.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub result: RunResult,
    pub log: Option<String>,
    pub final_reports: BTreeMap<ReplicaId, String>,
}

fn timeout_result(run_index: usize, seed: u64) -> RunResult {
    RunResult {
        run_index,
        seed,
        fault_injections: 0,
        fault_detections: 0,
        outcome: Outcome::Timeout,
        aborted_replicas: BTreeSet::new(),
        final_digests: BTreeMap::new(),
        applied_counts: BTreeMap::new(),
        injected_replicas: BTreeSet::new(),
        end: None,
        end_time_ms: 0,
        log_digest: 0,
        log_lines: 0,
        analysis: TraceAnalysis::default(),
    }
}

/// Runs one seeded simulation to completion and classifies it.
pub fn run_scenario(
    sc: &Scenario,
    seed: u64,
    run_index: usize,
    opts: &RunOptions,
) -> io::Result<RunArtifacts> {
    let mut sim_opts = opts.sim.clone();
    if let (Some(out), true) = (&opts.out_dir, sim_opts.storage_dir.is_some()) {
        sim_opts.storage_dir = Some(out.join(format!("run-{run_index:04}")).join("storage"));
    }
    let mut sim = Simulation::new(sc, seed, sim_opts);
    let end = sim.run();
    let timed_out = end != RunEnd::Completed;

    let survivors: Vec<Survivor<'_>> = sim
        .replicas()
        .iter()
        .filter(|r| r.is_running())
        .map(|r| Survivor {
            id: r.id(),
            applied_count: r.applied_count(),
            digest: r.app().digest_hash(),
            applied: r.applied_hashes(),
        })
        .collect();
    let detections = sim.stats().detections.len();
    let outcome = classify_run(&survivors, timed_out, detections);
    let final_digests = survivors.iter().map(|s| (s.id, s.digest)).collect();
    let applied_counts = sim
        .replicas()
        .iter()
        .map(|r| (r.id(), r.applied_count()))
        .collect();
    let aborted_replicas = sim
        .replicas()
        .iter()
        .filter(|r| !r.is_running())
        .map(|r| r.id())
        .collect();
    let injected_replicas = sim
        .injections_by_replica()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(r, _)| r as ReplicaId)
        .collect();
    let final_reports: BTreeMap<ReplicaId, String> = sim
        .replicas()
        .iter()
        .map(|r| (r.id(), r.app().final_state_report()))
        .collect();
    let trace = sim.trace();
    let result = RunResult {
        run_index,
        seed,
        fault_injections: sim.injections(),
        fault_detections: detections as u64,
        outcome,
        aborted_replicas,
        final_digests,
        applied_counts,
        injected_replicas,
        end: Some(end),
        end_time_ms: sim.now(),
        log_digest: trace.digest(),
        log_lines: trace.lines(),
        analysis: analyze_trace(trace.text(), sc.window),
    };
    if let Some(out) = &opts.out_dir {
        let dir = out.join(format!("run-{run_index:04}"));
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("events.log"), trace.text())?;
        for (r, rep) in &final_reports {
            fs::write(dir.join(format!("replica-{r}.state")), rep)?;
        }
        fs::write(dir.join("outcome.txt"), format!("{}\n", outcome.as_str()))?;
    }
    let log = opts.keep_log.then(|| sim.into_trace().into_text());
    Ok(RunArtifacts {
        result,
        log,
        final_reports,
    })
}

/// Runs seeds `base_seed .. base_seed + n_runs`. A run that panics or
/// cannot write its artifacts is recorded as TIMEOUT; the batch goes on.
pub fn run_experiment(
    name: &str,
    sc: &Scenario,
    n_runs: usize,
    base_seed: u64,
    opts: &RunOptions,
) -> (ExperimentTable, Vec<RunResult>) {
    let runs: Vec<RunResult> = (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed.wrapping_add(i as u64);
            let r = panic::catch_unwind(AssertUnwindSafe(|| run_scenario(sc, seed, i, opts)));
            match r {
                Ok(Ok(a)) => a.result,
                _ => timeout_result(i, seed),
            }
        })
        .collect();
    (ExperimentTable::from_runs(name, &runs), runs)
}

/// Writes `table.tsv` and `runs.tsv` for one or more experiments.
pub fn write_experiment_outputs(
    out: &Path,
    tables: &[ExperimentTable],
    runs: &[(String, Vec<RunResult>)],
) -> io::Result<()> {
    fs::create_dir_all(out)?;
    write_table_tsv(&out.join("table.tsv"), tables)?;
    write_runs_tsv(&out.join("runs.tsv"), runs)
}
