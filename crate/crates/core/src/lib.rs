//! Multi-Paxos replication hardened against non-malicious arbitrary faults,
//! with a deterministic simulator and fault-injection harness.

pub mod app;
pub mod fault;
pub mod harness;
pub mod hardening;
pub mod paxos;
pub mod sim;
pub mod validation;
