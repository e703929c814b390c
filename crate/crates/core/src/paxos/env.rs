use std::fmt;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::app::AppState;
use super::types::{Ballot, Checkpoint, LogRecord, Message, ReplicaId, Slot, Value};
use crate::fault::{AddAction, InjectionPoint};
use crate::hardening::codec::DecodeError;
use crate::hardening::{DetectionRecord, IntegrityError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TimerTag {
    Tick,
    Batch,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StorageError {
    #[error(transparent)]
    Integrity(#[from] IntegrityError),
    #[error("undecodable record: {0}")]
    Decode(#[from] DecodeError),
    #[error("no record at index {0}")]
    Missing(u64),
}

/// What an injection hook does once it fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Firing {
    pub add_action: AddAction,
}

/// Everything a replica can do to the outside world. Implemented by the
/// simulator; replicas never touch clocks, sockets or disks directly.
pub trait Env {
    fn now(&self) -> u64;
    fn send(&mut self, to: ReplicaId, msg: Message);
    /// Sends to every replica, the sender included.
    fn broadcast(&mut self, msg: Message);
    fn set_timer(&mut self, delay_ms: u64, tag: TimerTag);
    /// One traversal of an injection hook.
    fn fire(&mut self, point: InjectionPoint) -> Option<Firing>;
    fn rng(&mut self) -> &mut ChaCha8Rng;
    fn log(&mut self, kind: &str, summary: fmt::Arguments<'_>);
    /// Returns the index of the appended record.
    fn log_append(&mut self, rec: &LogRecord) -> u64;
    fn log_read(&mut self, index: u64) -> Result<LogRecord, StorageError>;
    fn checkpoint_save(&mut self, applied_count: u64, next_slot: Slot, state: &AppState);
    fn checkpoint_load(&mut self) -> Result<Option<Checkpoint>, StorageError>;
    /// Reports that this replica's acceptor accepted `value`.
    fn observe_accept(&mut self, slot: Slot, ballot: Ballot, value: &Value);
    /// A fault was detected and contained (the offending input dropped);
    /// the replica keeps running.
    fn detected(&mut self, record: &DetectionRecord);
    /// Called exactly once, when the replica stops for good.
    fn aborted(&mut self, record: &DetectionRecord);
}
