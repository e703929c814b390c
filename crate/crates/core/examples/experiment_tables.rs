//! Reproduces the shape of the detection tables: one row per injection
//! point, written as TSV under the output directory.
//!
//! ```bash
//! cargo run --release --example experiment_tables -- 5 /tmp/tables
//! ```

use std::path::PathBuf;

use hardened_paxos::fault::{InjectionPoint, InjectionSpec, Mode, Scenario};
use hardened_paxos::harness::report::table_text;
use hardened_paxos::harness::{run_experiment, write_experiment_outputs, RunOptions};

fn suite(point: InjectionPoint, mode: Mode, replicas: Option<u32>) -> Scenario {
    let mut spec = InjectionSpec::new(point, mode);
    if let Some(r) = replicas {
        spec = spec.on_replicas([r]);
    }
    Scenario {
        ops_per_replica: 1000,
        rate: 100.0,
        checkpoint_every: Some(1000),
        injections: vec![spec],
        ..Scenario::default()
    }
}

fn main() {
    let mut args = std::env::args().skip(1);
    let runs = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "target/experiment-tables".into()));

    let timed = Mode::SingleTimed { delay_ms: 5000 };
    let prob = Mode::Probability { p: 0.8 };
    let suites = [
        ("Message corruption", suite(InjectionPoint::NetMsgReceived, timed, Some(0))),
        ("Add element", suite(InjectionPoint::AppAddElement, timed, Some(1))),
        ("Log read", suite(InjectionPoint::StorageLogRead, timed, Some(2))),
        ("Checkpoint read", suite(InjectionPoint::CheckpointRead, timed, Some(2))),
        ("Learner commits with no quorum", suite(InjectionPoint::LearnerCommitQuorum, prob, Some(3))),
        ("Learner commits with no quorum (all)", suite(InjectionPoint::LearnerCommitQuorum, prob, None)),
        ("Acceptor forgets promises (all)", suite(InjectionPoint::AcceptorPromiseHistory, prob, None)),
        ("Coordinator ignores promises (all)", suite(InjectionPoint::CoordinatorPromiseValues, prob, None)),
    ];

    let mut tables = Vec::new();
    let mut all_runs = Vec::new();
    for (name, sc) in &suites {
        let (t, rs) = run_experiment(name, sc, runs, 1, &RunOptions::default());
        eprintln!("{}", t.row());
        tables.push(t);
        all_runs.push((name.to_string(), rs));
    }
    print!("{}", table_text(&tables));
    write_experiment_outputs(&out, &tables, &all_runs).expect("output directory is writable");
    println!("wrote {}/table.tsv and runs.tsv", out.display());
}
