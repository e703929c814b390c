//! Semantic checks on the replicated hash table.
//!
//! ```bash
//! cargo run --release --example app_fault
//! ```

use hardened_paxos::app::{AddFault, AppState, Operation};
use hardened_paxos::fault::{InjectionPoint, InjectionSpec, Mode, Scenario};
use hardened_paxos::harness::{run_scenario, RunOptions};

fn main() {
    let mut app = AppState::new();
    app.apply(&Operation::add("alpha"), None).unwrap();
    app.apply(&Operation::add("beta"), None).unwrap();
    println!("state: {:?} digest {:016x}", app.elements().collect::<Vec<_>>(), app.digest_hash());

    for fault in [AddFault::Skip, AddFault::Replace("gamma?".into())] {
        let mut copy = app.clone();
        match copy.apply(&Operation::add("gamma"), Some(&fault)) {
            Ok(()) => println!("{fault:?}: not noticed"),
            Err(e) => println!("{fault:?}: {e}"),
        }
    }

    let mut copy = app.clone();
    copy.corrupt_count_shadow(99);
    println!("count shadow corrupted: {:?}", copy.count());

    // The same deviation inside a running cluster.
    let sc = Scenario {
        ops_per_replica: 600,
        rate: 100.0,
        injections: vec![InjectionSpec::new(InjectionPoint::AppAddElement, Mode::SingleTimed { delay_ms: 2000 })
            .on_replicas([1])
            .with_param("action", "replace")],
        ..Scenario::default()
    };
    let r = run_scenario(&sc, 11, 0, &RunOptions::default()).unwrap().result;
    println!("cluster: outcome {} aborted {:?}", r.outcome.as_str(), r.analysis.aborted);
}
