//! Windowed state validation between five replicas.
//!
//! Replica 0 holds a state that disagrees with the other four. Checksums
//! arrive piggybacked on votes; once three other replicas agree on a hash
//! for the current window, replica 0 compares it with its own and fails.
//!
//! ```bash
//! cargo run --example distributed_validation
//! ```

use hardened_paxos::validation::{StateChecksum, Validator};

const W: u64 = 100;

fn main() {
    let good = 0x1111_2222_3333_4444;
    let bad = 0xdead_beef_0000_0001;

    // Transition count 0 has the window labelled 1.
    let mut v = Validator::new(0, 5, StateChecksum::new(1, good));
    for r in 1..5 {
        let out = v.receive(r, StateChecksum::new(1, good)).unwrap();
        println!("label 1 from {r}: {out:?}");
    }

    // After transition 100 replica 0 generates the checksum for label 101,
    // which already reflects its corrupted state.
    let label = StateChecksum::label_for(W, W);
    // A faster replica's checksum for label 101 arrives first and waits in the backlog.
    println!("early label {label} from 4: {:?}", v.receive(4, StateChecksum::new(label, good)).unwrap());
    match v.advance(StateChecksum::new(label, bad)) {
        Ok(()) => println!("advanced to label {label}, window holds {}", v.window().received.len()),
        Err(e) => println!("advance failed: {e}"),
    }
    for r in 1..4 {
        match v.receive(r, StateChecksum::new(label, good)) {
            Ok(out) => println!("label {label} from {r}: {out:?}"),
            Err(e) => {
                println!("replica 0 aborts: {e}");
                return;
            }
        }
    }
}
