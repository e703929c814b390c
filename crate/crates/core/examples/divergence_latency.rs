//! Silent state corruption that no local check can see, caught by
//! distributed validation. Prints how far the corrupted replica got
//! before aborting, for several window sizes.
//!
//! ```bash
//! cargo run --release --example divergence_latency
//! ```

use hardened_paxos::fault::Scenario;
use hardened_paxos::harness::{run_scenario, RunOptions};
use hardened_paxos::sim::SimOptions;

fn main() {
    let t = 250;
    let victim = 2;
    println!("corrupting replica {victim} after transition {t}");
    for w in [1, 10, 100] {
        let sc = Scenario {
            loss_prob: 0.0,
            window: w,
            ops_per_replica: 200,
            rate: 5.0,
            batch: 1,
            ..Scenario::default()
        };
        let opts = RunOptions {
            sim: SimOptions {
                corrupt: Some((victim, t)),
                ..SimOptions::default()
            },
            ..RunOptions::default()
        };
        let r = run_scenario(&sc, 5, 0, &opts).unwrap().result;
        println!(
            "W={w:<3} aborted {:?} at transition {} (deadline {}), outcome {}",
            r.aborted_replicas,
            r.applied_counts[&victim],
            (t / w + 2) * w,
            r.outcome.as_str()
        );
    }
}
