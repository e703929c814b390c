//! Scenario files: `key=value` lines plus `inject` lines.
//!
//! ```bash
//! cargo run --example scenario_file -- scenarios/learner_one_replica.conf
//! ```

use hardened_paxos::fault::parse_config;

const INLINE: &str = "\
# five replicas, short run
replicas=5
window=100
loss_prob=0.15
dup_prob=0.02
delay_ms=1-20
ops_per_replica=500
inject point=STORAGE_LOG_READ mode=timed delay_ms=3000 replicas=2
inject point=LEARNER_COMMIT_QUORUM mode=prob p=0.8 replicas=all
";

fn main() {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(&path).expect("readable scenario file"),
        None => INLINE.to_string(),
    };
    let sc = match parse_config(&text) {
        Ok(sc) => sc,
        Err(e) => {
            eprintln!("bad scenario: {e}");
            std::process::exit(2);
        }
    };
    println!(
        "n={} W={} loss={} dup={} delay={:?} ops/replica={} batch={} rate={}/s",
        sc.replicas, sc.window, sc.loss_prob, sc.dup_prob, sc.delay_ms, sc.ops_per_replica, sc.batch, sc.rate
    );
    for spec in &sc.injections {
        let on = match &spec.replicas {
            None => "all".to_string(),
            Some(rs) => format!("{rs:?}"),
        };
        println!("  {} {:?} on {on}", spec.point, spec.mode);
    }

    for bad in ["loss_prob=1.5", "inject point=NOPE mode=prob p=0.1", "window=0", "colour=blue"] {
        println!("{bad:40} -> {}", parse_config(bad).unwrap_err());
    }
}
