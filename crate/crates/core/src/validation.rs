//! Windowed, opportunistic state-divergence detection.
//!
//! Replicas attach their current [`StateChecksum`] to every vote. A learner
//! collects the checksums it receives for its current window label and, once
//! a quorum of remote replicas agree on one hash, compares that hash with its
//! own. Checksums for the next label wait in a single backlog.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::hardening::codec::{Canonical, DecodeError, Decoder, Encoder};

pub type ReplicaId = u32;

/// Majority quorum size for `n` replicas.
pub fn quorum(n: usize) -> usize {
    n / 2 + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateChecksum {
    /// Transition count at which the checksum was generated, `kW + 1`.
    pub state_count: u64,
    pub hash: u64,
}

impl StateChecksum {
    pub fn new(state_count: u64, hash: u64) -> Self {
        StateChecksum { state_count, hash }
    }

    /// Label of the window that contains transition `applied_count + 1`.
    pub fn label_for(applied_count: u64, window: u64) -> u64 {
        applied_count / window * window + 1
    }
}

impl fmt::Display for StateChecksum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{:016x}", self.state_count, self.hash)
    }
}

impl Canonical for StateChecksum {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.state_count).u64(self.hash);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(StateChecksum {
            state_count: dec.u64()?,
            hash: dec.u64()?,
        })
    }
}

/// Checksums received for one generation label, at most one per replica.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationWindow {
    pub generation_count: u64,
    pub received: BTreeMap<ReplicaId, StateChecksum>,
}

/// The backlog holds checksums for a single future label.
pub type Backlog = ValidationWindow;

impl ValidationWindow {
    pub fn new(generation_count: u64) -> Self {
        ValidationWindow {
            generation_count,
            received: BTreeMap::new(),
        }
    }

    /// Stores `cs` from `from`. Returns `Ok(false)` for an identical
    /// duplicate, `Err` when the replica contradicts an earlier checksum.
    fn store(&mut self, from: ReplicaId, cs: StateChecksum) -> Result<bool, ValidationError> {
        debug_assert_eq!(cs.state_count, self.generation_count);
        match self.received.get(&from) {
            Some(prev) if *prev == cs => Ok(false),
            Some(prev) => Err(ValidationError::Conflict {
                replica: from,
                first: *prev,
                second: cs,
            }),
            None => {
                self.received.insert(from, cs);
                Ok(true)
            }
        }
    }
}

/// All stored checksums carrying the modal hash. Ties between hashes with
/// equal frequency go to the smallest hash.
pub fn most_common_checksum(window: &ValidationWindow) -> Vec<StateChecksum> {
    let mut freq: BTreeMap<u64, usize> = BTreeMap::new();
    for cs in window.received.values() {
        *freq.entry(cs.hash).or_default() += 1;
    }
    // BTreeMap iterates in ascending hash order, so the first maximum wins.
    let mut modal: Option<(u64, usize)> = None;
    for (&h, &c) in &freq {
        if modal.is_none_or(|(_, best)| c > best) {
            modal = Some((h, c));
        }
    }
    match modal {
        None => Vec::new(),
        Some((h, _)) => window
            .received
            .values()
            .filter(|cs| cs.hash == h)
            .copied()
            .collect(),
    }
}

/// Decides once the modal list reaches exactly `q` entries.
pub fn quorum_check(
    window: &ValidationWindow,
    local: StateChecksum,
    q: usize,
) -> Result<(), ValidationError> {
    let list = most_common_checksum(window);
    if list.len() == q && list[0].hash != local.hash {
        return Err(ValidationError::Diverged {
            local,
            modal_hash: list[0].hash,
            votes: list.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReceiveOutcome {
    /// Stored in the current (or trailing) window; no divergence found.
    ValidatedOk,
    StoredBacklog,
    Discarded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("state diverged: local {local}, {votes} replicas agree on {modal_hash:016x}")]
    Diverged {
        local: StateChecksum,
        modal_hash: u64,
        votes: usize,
    },
    #[error("replica {replica} sent conflicting checksums {first} and {second}")]
    Conflict {
        replica: ReplicaId,
        first: StateChecksum,
        second: StateChecksum,
    },
}

/// Per-replica validation state: current window, one backlog, and the
/// window that was current before the last advance.
///
/// The trailing window lets checksums that arrive just after the local
/// replica moved past a label still be compared against the local checksum
/// it had for that label.
#[derive(Debug, Clone)]
pub struct Validator {
    me: ReplicaId,
    q: usize,
    local: StateChecksum,
    window: ValidationWindow,
    backlog: Option<Backlog>,
    trailing: Option<(ValidationWindow, StateChecksum)>,
}

impl Validator {
    pub fn new(me: ReplicaId, n: usize, initial: StateChecksum) -> Self {
        Validator {
            me,
            q: quorum(n),
            local: initial,
            window: ValidationWindow::new(initial.state_count),
            backlog: None,
            trailing: None,
        }
    }

    pub fn local(&self) -> StateChecksum {
        self.local
    }

    pub fn window(&self) -> &ValidationWindow {
        &self.window
    }

    pub fn backlog(&self) -> Option<&Backlog> {
        self.backlog.as_ref()
    }

    pub fn quorum(&self) -> usize {
        self.q
    }

    /// Handles a checksum read from a verified vote sent by `from`.
    /// The replica's own checksums are never counted.
    pub fn receive(
        &mut self,
        from: ReplicaId,
        cs: StateChecksum,
    ) -> Result<ReceiveOutcome, ValidationError> {
        if from == self.me {
            return Ok(ReceiveOutcome::Discarded);
        }
        if cs.state_count == self.window.generation_count {
            if self.window.store(from, cs)? {
                quorum_check(&self.window, self.local, self.q)?;
            }
            return Ok(ReceiveOutcome::ValidatedOk);
        }
        if let Some((tw, tlocal)) = &mut self.trailing {
            if cs.state_count == tw.generation_count {
                if tw.store(from, cs)? {
                    quorum_check(tw, *tlocal, self.q)?;
                }
                return Ok(ReceiveOutcome::ValidatedOk);
            }
        }
        if cs.state_count > self.window.generation_count {
            let backlog = self
                .backlog
                .get_or_insert_with(|| ValidationWindow::new(cs.state_count));
            if backlog.generation_count == cs.state_count {
                backlog.store(from, cs)?;
                return Ok(ReceiveOutcome::StoredBacklog);
            }
        }
        Ok(ReceiveOutcome::Discarded)
    }

    /// Installs a freshly generated local checksum. A backlog with the same
    /// label becomes the current window and its checksums are re-checked
    /// one by one in replica order; any other backlog is dropped.
    pub fn advance(&mut self, new_local: StateChecksum) -> Result<(), ValidationError> {
        let old = std::mem::replace(
            &mut self.window,
            ValidationWindow::new(new_local.state_count),
        );
        self.trailing = Some((old, self.local));
        self.local = new_local;
        if let Some(b) = self.backlog.take() {
            if b.generation_count == new_local.state_count {
                for (from, cs) in b.received {
                    self.window.store(from, cs)?;
                    quorum_check(&self.window, self.local, self.q)?;
                }
            }
        }
        Ok(())
    }
}
