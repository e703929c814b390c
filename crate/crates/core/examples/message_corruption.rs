//! A single corrupted inbound message is caught by the envelope checksum
//! and dropped; the receiving replica keeps running.
//!
//! ```bash
//! cargo run --release --example message_corruption
//! ```

use hardened_paxos::fault::{parse_config, InjectionPoint, InjectionSpec, Mode, Scenario};
use hardened_paxos::harness::{run_scenario, RunOptions};

fn main() {
    let sc = Scenario {
        ops_per_replica: 600,
        rate: 100.0,
        injections: vec![InjectionSpec::new(
            InjectionPoint::NetMsgReceived,
            Mode::SingleTimed { delay_ms: 2000 },
        )
        .on_replicas([0])],
        ..Scenario::default()
    };
    // Same thing, written as a scenario file.
    let from_file = parse_config(
        "ops_per_replica=600\nrate=100\ninject point=NET_MSG_RECEIVED mode=timed delay_ms=2000 replicas=0\n",
    )
    .unwrap();
    assert_eq!(sc, from_file);

    let opts = RunOptions {
        keep_log: true,
        ..RunOptions::default()
    };
    let art = run_scenario(&sc, 42, 0, &opts).expect("in-memory run");
    let log = art.log.unwrap();
    for line in log.lines().filter(|l| l.contains(" INJECT ") || l.contains(" DETECT ")) {
        println!("{line}");
    }
    let r = art.result;
    println!(
        "outcome {} injections {} detections {} aborted {:?}",
        r.outcome.as_str(),
        r.fault_injections,
        r.fault_detections,
        r.aborted_replicas
    );
}
