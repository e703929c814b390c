//! A learner that commits on the first vote it sees, on one replica.
//! Each run is classified OK / DETECTED / ERROR / TIMEOUT.
//!
//! ```bash
//! cargo run --release --example learner_no_quorum -- 10
//! ```

use hardened_paxos::fault::{InjectionPoint, InjectionSpec, Mode, Scenario};
use hardened_paxos::harness::report::table_text;
use hardened_paxos::harness::{run_experiment, RunOptions};

fn main() {
    let runs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let sc = Scenario {
        ops_per_replica: 1000,
        rate: 100.0,
        injections: vec![
            InjectionSpec::new(InjectionPoint::LearnerCommitQuorum, Mode::Probability { p: 0.8 }).on_replicas([3]),
        ],
        ..Scenario::default()
    };
    let (table, results) = run_experiment("Learner commits with no quorum", &sc, runs, 100, &RunOptions::default());
    for r in &results {
        println!(
            "seed {} {:8} injections {:6} diverged {:?} aborted {:?}",
            r.seed,
            r.outcome.as_str(),
            r.fault_injections,
            r.analysis.divergence_window,
            r.aborted_replicas
        );
    }
    println!();
    print!("{}", table_text(&[table]));
}
