//! Named injection points, firing modes and corruption actions.

pub mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::validation::ReplicaId;

pub use config::{parse_config, ConfigError, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InjectionPoint {
    NetMsgReceived,
    StorageLogRead,
    CheckpointRead,
    AppAddElement,
    LearnerCommitQuorum,
    AcceptorPromiseHistory,
    CoordinatorPromiseValues,
}

impl InjectionPoint {
    pub const ALL: [InjectionPoint; 7] = [
        InjectionPoint::NetMsgReceived,
        InjectionPoint::StorageLogRead,
        InjectionPoint::CheckpointRead,
        InjectionPoint::AppAddElement,
        InjectionPoint::LearnerCommitQuorum,
        InjectionPoint::AcceptorPromiseHistory,
        InjectionPoint::CoordinatorPromiseValues,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InjectionPoint::NetMsgReceived => "NET_MSG_RECEIVED",
            InjectionPoint::StorageLogRead => "STORAGE_LOG_READ",
            InjectionPoint::CheckpointRead => "CHECKPOINT_READ",
            InjectionPoint::AppAddElement => "APP_ADD_ELEMENT",
            InjectionPoint::LearnerCommitQuorum => "LEARNER_COMMIT_QUORUM",
            InjectionPoint::AcceptorPromiseHistory => "ACCEPTOR_PROMISE_HISTORY",
            InjectionPoint::CoordinatorPromiseValues => "COORDINATOR_PROMISE_VALUES",
        }
    }
}

impl fmt::Display for InjectionPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InjectionPoint {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        InjectionPoint::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// Fires on the first traversal at or after `delay_ms`, then never again.
    SingleTimed { delay_ms: u64 },
    /// Fires on each traversal with probability `p`.
    Probability { p: f64 },
}

/// How an `APP_ADD_ELEMENT` injection deviates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AddAction {
    #[default]
    Skip,
    Replace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InjectionSpec {
    pub point: InjectionPoint,
    pub mode: Mode,
    /// `None` targets every replica.
    pub replicas: Option<BTreeSet<ReplicaId>>,
    pub params: BTreeMap<String, String>,
}

impl InjectionSpec {
    pub fn new(point: InjectionPoint, mode: Mode) -> Self {
        InjectionSpec {
            point,
            mode,
            replicas: None,
            params: BTreeMap::new(),
        }
    }

    pub fn on_replicas<I: IntoIterator<Item = ReplicaId>>(mut self, ids: I) -> Self {
        self.replicas = Some(ids.into_iter().collect());
        self
    }

    pub fn with_param(mut self, k: &str, v: &str) -> Self {
        self.params.insert(k.to_string(), v.to_string());
        self
    }

    pub fn targets(&self, r: ReplicaId) -> bool {
        self.replicas.as_ref().is_none_or(|s| s.contains(&r))
    }

    pub fn add_action(&self) -> AddAction {
        match self.params.get("action").map(String::as_str) {
            Some("replace") => AddAction::Replace,
            _ => AddAction::Skip,
        }
    }
}

/// Firing decision for one spec. `fired` is the spec's per-replica
/// disabled flag for timed mode.
pub fn should_fire(spec: &InjectionSpec, fired: &mut bool, now: u64, rng: &mut ChaCha8Rng) -> bool {
    match spec.mode {
        Mode::SingleTimed { delay_ms } => {
            if !*fired && now >= delay_ms {
                *fired = true;
                true
            } else {
                false
            }
        }
        Mode::Probability { p } => rng.gen::<f64>() < p,
    }
}

/// XORs one rng-chosen byte with a nonzero mask. Returns the offset, or
/// `None` for an empty payload.
pub fn corrupt_payload(payload: &mut [u8], rng: &mut ChaCha8Rng) -> Option<usize> {
    if payload.is_empty() {
        return None;
    }
    let i = rng.gen_range(0..payload.len());
    let mask: u8 = rng.gen_range(1..=255);
    payload[i] ^= mask;
    Some(i)
}

/// Registered specs plus their firing state for one run.
#[derive(Debug, Clone)]
pub struct Injector {
    specs: Vec<InjectionSpec>,
    timed_fired: Vec<Vec<bool>>,
    armed: bool,
    fired_total: u64,
    fired_by_replica: Vec<u64>,
}

impl Injector {
    pub fn new(specs: Vec<InjectionSpec>, n: usize) -> Self {
        let timed_fired = vec![vec![false; n]; specs.len()];
        Injector {
            specs,
            timed_fired,
            armed: true,
            fired_total: 0,
            fired_by_replica: vec![0; n],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn specs(&self) -> &[InjectionSpec] {
        &self.specs
    }

    /// Stops all further firing.
    pub fn disarm(&mut self) {
        self.armed = false;
    }

    pub fn fired_total(&self) -> u64 {
        self.fired_total
    }

    pub fn fired_by_replica(&self) -> &[u64] {
        &self.fired_by_replica
    }

    /// One traversal of `point` by `replica`. Returns the firing spec.
    pub fn traverse(
        &mut self,
        point: InjectionPoint,
        replica: ReplicaId,
        now: u64,
        rng: &mut ChaCha8Rng,
    ) -> Option<&InjectionSpec> {
        if !self.armed {
            return None;
        }
        for (i, spec) in self.specs.iter().enumerate() {
            if spec.point != point || !spec.targets(replica) {
                continue;
            }
            let flag = &mut self.timed_fired[i][replica as usize];
            if should_fire(spec, flag, now, rng) {
                self.fired_total += 1;
                self.fired_by_replica[replica as usize] += 1;
                return Some(&self.specs[i]);
            }
        }
        None
    }
}
