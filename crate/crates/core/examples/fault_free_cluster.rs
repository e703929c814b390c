//! Five replicas under the stress network profile with no injections.
//!
//! ```bash
//! cargo run --release --example fault_free_cluster -- 7
//! ```

use std::time::Instant;

use hardened_paxos::fault::Scenario;
use hardened_paxos::sim::{SimOptions, Simulation};

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let sc = Scenario {
        ops_per_replica: 2000,
        ..Scenario::default()
    };
    let t0 = Instant::now();
    let mut sim = Simulation::new(&sc, seed, SimOptions::default());
    let end = sim.run();
    println!(
        "seed {seed}: {end:?} at t={}ms, {} log lines, wall {:?}",
        sim.now(),
        sim.trace().lines(),
        t0.elapsed()
    );
    for r in sim.replicas() {
        println!(
            "replica {} {:?} applied={} digest={:016x} acks={}",
            r.id(),
            r.status(),
            r.applied_count(),
            r.app().digest_hash(),
            r.acks()
        );
    }
    let stats = sim.stats();
    println!(
        "sends={} deliveries={} detections={}",
        stats.sends.iter().sum::<u64>(),
        stats.deliveries,
        stats.detections.len()
    );
}
