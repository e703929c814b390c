//! Multi-Paxos with broadcast votes. Every replica runs all four roles;
//! acceptors send their votes to every replica so learners commit as soon
//! as they see a quorum.

pub mod env;
pub mod replica;
pub mod types;

pub use env::{Env, Firing, StorageError, TimerTag};
pub use replica::{Replica, ReplicaConfig, Role, Status};
pub use types::{
    AcceptedEntry, Ballot, Checkpoint, LogRecord, Message, Packet, ReplicaId, Slot, Value, VoteMsg,
};
