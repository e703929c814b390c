//! Corrupted log and checkpoint reads turn the affected replica into a
//! crash-stop failure; the other four finish with equal state.
//!
//! Storage is file-backed under a temporary directory, so the corrupted
//! records can be inspected on disk while the example runs.
//!
//! ```bash
//! cargo run --release --example storage_corruption
//! ```

use hardened_paxos::fault::{InjectionPoint, InjectionSpec, Mode, Scenario};
use hardened_paxos::harness::{run_scenario, RunOptions};
use hardened_paxos::sim::SimOptions;

fn main() {
    let dir = tempfile::tempdir().expect("temporary directory");
    for point in [InjectionPoint::StorageLogRead, InjectionPoint::CheckpointRead] {
        let sc = Scenario {
            ops_per_replica: 800,
            rate: 100.0,
            checkpoint_every: Some(500),
            injections: vec![InjectionSpec::new(point, Mode::SingleTimed { delay_ms: 3000 }).on_replicas([2])],
            ..Scenario::default()
        };
        let opts = RunOptions {
            sim: SimOptions {
                storage_dir: Some(dir.path().join(point.as_str())),
                ..SimOptions::default()
            },
            ..RunOptions::default()
        };
        let art = run_scenario(&sc, 3, 0, &opts).expect("storage directory is writable");
        let r = &art.result;
        println!("{point}: outcome {} aborted {:?}", r.outcome.as_str(), r.aborted_replicas);
        for (who, why) in &r.analysis.aborted {
            println!("  replica {who}: {why}");
        }
        for (id, d) in &r.final_digests {
            println!("  replica {id} digest {d:016x} applied {}", r.applied_counts[id]);
        }
    }
}
