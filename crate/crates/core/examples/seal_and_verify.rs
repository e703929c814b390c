//! Local detection: checksummed envelopes and mirrored scalars.
//!
//! ```bash
//! cargo run --example seal_and_verify
//! ```

use hardened_paxos::hardening::{hash64, seal, verify_open, Envelope, MirroredCell};

fn main() {
    let env = seal(b"add alpha".to_vec());
    println!("sealed {} bytes, checksum {:016x}", env.payload.len(), env.checksum);
    assert_eq!(verify_open(&env).unwrap(), b"add alpha");

    // One flipped bit anywhere in the payload is caught on open.
    let mut bad = env.clone();
    bad.payload[3] ^= 0x10;
    match verify_open(&bad) {
        Ok(_) => println!("corruption went unnoticed"),
        Err(e) => println!("detected: {e}"),
    }

    // Storage byte form round-trips; the checksum travels with the bytes.
    let bytes = env.to_bytes();
    let (back, used) = Envelope::from_bytes(&bytes).expect("complete record");
    assert_eq!(used, bytes.len());
    assert_eq!(back, env);

    let mut count = MirroredCell::new(41u64);
    count.write(42);
    println!("count = {}", count.read().unwrap());
    count.corrupt_shadow(7);
    match count.read() {
        Ok(v) => println!("read {v}"),
        Err(e) => println!("detected: {e}"),
    }

    println!("fnv1a64(\"\") = {:016x}", hash64(b""));
}
