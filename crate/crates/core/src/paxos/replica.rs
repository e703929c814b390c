use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use rand::Rng;

use super::env::{Env, TimerTag};
use super::types::{
    AcceptedEntry, Ballot, LogRecord, Message, Packet, ReplicaId, Slot, Value, VoteMsg,
};
use crate::app::{AddFault, AppError, AppState, OpKind, Operation};
use crate::fault::{AddAction, InjectionPoint};
use crate::hardening::{DetectionKind, DetectionRecord, MirroredCell, StateRedundancyError};
use crate::validation::{quorum, StateChecksum, ValidationError, Validator};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplicaConfig {
    pub n: usize,
    pub window: u64,
    pub batch: usize,
    pub batch_timeout_ms: u64,
    pub tick_ms: u64,
    pub heartbeat_ms: u64,
    /// An inflight slot undecided for this long is proposed again.
    pub round_timeout_ms: u64,
    /// Same-ballot re-proposals of a stalled slot before the leader gives
    /// up on the round and starts a new ballot.
    pub retransmits: u32,
    /// Quiet period between giving up on a round and sending Prepare; no
    /// new slots are proposed meanwhile so in-flight votes can land.
    pub drain_ms: u64,
    pub prepare_timeout_ms: u64,
    pub failover_ms: u64,
    /// Extra failover delay per position behind the current leader.
    pub failover_stagger_ms: u64,
    pub retry_ms: u64,
    pub catchup_ms: u64,
    pub catchup_span: u64,
    pub checkpoint_every: u64,
}

impl Default for ReplicaConfig {
    fn default() -> Self {
        ReplicaConfig {
            n: 5,
            window: 100,
            batch: 10,
            batch_timeout_ms: 5,
            tick_ms: 10,
            heartbeat_ms: 50,
            round_timeout_ms: 80,
            retransmits: 1,
            drain_ms: 40,
            prepare_timeout_ms: 80,
            failover_ms: 200,
            failover_stagger_ms: 25,
            retry_ms: 150,
            catchup_ms: 30,
            catchup_span: 64,
            checkpoint_every: 5000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Leader,
    Candidate,
    Follower,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Running,
    Aborted(DetectionRecord),
}

type Step = Result<(), DetectionRecord>;

/// Votes seen for one (slot, ballot): each distinct value with the bitmask
/// of acceptors that voted for it.
#[derive(Debug)]
struct BallotTally {
    ballot: Ballot,
    values: Vec<(Value, u64)>,
}

/// One replica: coordinator, proposer, acceptor and learner at once.
#[derive(Debug)]
pub struct Replica {
    id: ReplicaId,
    cfg: ReplicaConfig,
    q: usize,
    status: Status,

    app: AppState,
    applied_count: MirroredCell<u64>,
    next_apply: MirroredCell<Slot>,
    validator: Validator,
    corrupt_at: Option<u64>,
    last_checkpoint: u64,
    applied_hashes: Vec<u64>,

    promised: Ballot,
    accepted: BTreeMap<Slot, (Ballot, Value)>,

    decided: BTreeMap<Slot, Decided>,
    log_index: HashMap<Slot, u64>,
    tallies: HashMap<Slot, Vec<BallotTally>>,
    max_known: Option<Slot>,
    gap_since: Option<u64>,
    catchup_target: ReplicaId,
    catchup_attempts: u64,

    role: Role,
    ballot: Ballot,
    next_slot: Slot,
    pending: VecDeque<Operation>,
    queued: HashSet<String>,
    /// Slot → (value, last sent, re-proposals so far).
    inflight: BTreeMap<Slot, (Value, u64, u32)>,
    /// Acceptor → (accepted history, learned values).
    promises: BTreeMap<ReplicaId, (Vec<AcceptedEntry>, Vec<AcceptedEntry>)>,
    prepare_from: Slot,
    phase_started: u64,
    draining: Option<u64>,
    batch_armed: bool,
    last_heartbeat: u64,
    last_progress: u64,

    own_pending: BTreeMap<String, u64>,
    acks: u64,
}

/// A learned value. `certified` is set when this learner itself counted
/// `q` distinct acceptor votes for it at `ballot`.
#[derive(Debug, Clone)]
struct Decided {
    ballot: Ballot,
    value: Value,
    certified: bool,
}

fn detection(kind: DetectionKind, state_count: u64, detail: String) -> DetectionRecord {
    DetectionRecord {
        kind,
        state_count,
        detail,
    }
}

impl Replica {
    pub fn new(id: ReplicaId, cfg: ReplicaConfig) -> Self {
        let app = AppState::new();
        let initial = StateChecksum::new(1, app.digest_hash());
        let q = quorum(cfg.n);
        Replica {
            id,
            q,
            status: Status::Running,
            validator: Validator::new(id, cfg.n, initial),
            app,
            applied_count: MirroredCell::new(0),
            next_apply: MirroredCell::new(0),
            corrupt_at: None,
            last_checkpoint: 0,
            applied_hashes: Vec::new(),
            promised: Ballot::default(),
            accepted: BTreeMap::new(),
            decided: BTreeMap::new(),
            log_index: HashMap::new(),
            tallies: HashMap::new(),
            max_known: None,
            gap_since: None,
            catchup_target: id,
            catchup_attempts: 0,
            role: Role::Follower,
            ballot: Ballot::new(0, id),
            next_slot: 0,
            pending: VecDeque::new(),
            queued: HashSet::new(),
            inflight: BTreeMap::new(),
            promises: BTreeMap::new(),
            prepare_from: 0,
            phase_started: 0,
            draining: None,
            batch_armed: false,
            last_heartbeat: 0,
            last_progress: 0,
            own_pending: BTreeMap::new(),
            acks: 0,
            cfg,
        }
    }

    pub fn id(&self) -> ReplicaId {
        self.id
    }

    pub fn status(&self) -> &Status {
        &self.status
    }

    pub fn is_running(&self) -> bool {
        self.status == Status::Running
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn ballot(&self) -> Ballot {
        self.ballot
    }

    pub fn promised(&self) -> Ballot {
        self.promised
    }

    pub fn app(&self) -> &AppState {
        &self.app
    }

    /// Applied-transition count, or `u64::MAX` if its mirror is broken.
    pub fn applied_count(&self) -> u64 {
        self.applied_count.read().unwrap_or(u64::MAX)
    }

    pub fn next_apply(&self) -> Slot {
        self.next_apply.read().unwrap_or(Slot::MAX)
    }

    pub fn max_decided(&self) -> Option<Slot> {
        self.decided.keys().next_back().copied()
    }

    pub fn decided(&self, slot: Slot) -> Option<&Value> {
        self.decided.get(&slot).map(|d| &d.value)
    }

    pub fn accepted(&self, slot: Slot) -> Option<&(Ballot, Value)> {
        self.accepted.get(&slot)
    }

    /// Digest of each applied value, in slot order.
    pub fn applied_hashes(&self) -> &[u64] {
        &self.applied_hashes
    }

    pub fn own_pending(&self) -> usize {
        self.own_pending.len()
    }

    pub fn acks(&self) -> u64 {
        self.acks
    }

    pub fn checksum(&self) -> StateChecksum {
        self.validator.local()
    }

    /// Silently corrupts application state right after transition `t`.
    pub fn schedule_corruption(&mut self, t: u64) {
        self.corrupt_at = Some(t);
    }

    pub fn start(&mut self, env: &mut dyn Env) {
        if self.id == 0 {
            self.role = Role::Leader;
            self.ballot = Ballot::new(0, 0);
        }
        env.set_timer(self.cfg.tick_ms, TimerTag::Tick);
    }

    fn guard(&mut self, env: &mut dyn Env, r: Step) {
        if let Err(rec) = r {
            env.aborted(&rec);
            self.status = Status::Aborted(rec);
        }
    }

    pub fn on_packet(&mut self, env: &mut dyn Env, pkt: Packet) {
        if !self.is_running() {
            return;
        }
        let from = pkt.from;
        let r = match pkt.msg {
            Message::ClientForward { ops } => {
                if self.role != Role::Follower {
                    self.enqueue(env, ops);
                }
                Ok(())
            }
            Message::Prepare { ballot, from_slot } => {
                self.on_prepare(env, ballot, from_slot);
                Ok(())
            }
            Message::Promise {
                ballot,
                acceptor,
                accepted,
                decided,
            } => self.on_promise(env, ballot, acceptor, accepted, decided),
            Message::Propose {
                ballot,
                slot,
                value,
            } => {
                self.on_propose(env, ballot, slot, value);
                Ok(())
            }
            Message::Vote(v) => self.on_vote(env, v),
            Message::Decision {
                ballot,
                slot,
                value,
                certified,
            } => self.on_decision(env, from, ballot, slot, value, certified),
            Message::CatchUp { from_slot, to_slot } => {
                self.on_catchup(env, from, from_slot, to_slot);
                Ok(())
            }
            Message::Heartbeat {
                ballot,
                decided_upto,
            } => {
                self.on_heartbeat(env, ballot, decided_upto);
                Ok(())
            }
        };
        self.guard(env, r);
    }

    pub fn on_client_op(&mut self, env: &mut dyn Env, op: Operation) {
        if !self.is_running() {
            return;
        }
        self.own_pending.insert(op.element.clone(), env.now());
        self.route(env, vec![op]);
    }

    pub fn on_timer(&mut self, env: &mut dyn Env, tag: TimerTag) {
        if !self.is_running() {
            return;
        }
        match tag {
            TimerTag::Batch => {
                self.batch_armed = false;
                if self.role == Role::Leader {
                    self.flush(env, true);
                }
            }
            TimerTag::Tick => {
                env.set_timer(self.cfg.tick_ms, TimerTag::Tick);
                self.tick(env);
            }
        }
    }

    fn tick(&mut self, env: &mut dyn Env) {
        let now = env.now();
        match self.role {
            Role::Leader => {
                if now >= self.last_heartbeat + self.cfg.heartbeat_ms {
                    self.heartbeat(env);
                }
                let timeout = self.cfg.round_timeout_ms;
                let stalled: Vec<Slot> = self
                    .inflight
                    .iter()
                    .filter(|(_, (_, t, _))| now >= t + timeout)
                    .map(|(&s, _)| s)
                    .collect();
                if let Some(t) = self.draining {
                    if now >= t + self.cfg.drain_ms {
                        self.start_phase1(env);
                    }
                } else if stalled
                    .iter()
                    .any(|s| self.inflight[s].2 >= self.cfg.retransmits)
                {
                    self.draining = Some(now);
                    if self.cfg.drain_ms == 0 {
                        self.start_phase1(env);
                    }
                } else {
                    for s in stalled {
                        let e = self.inflight.get_mut(&s).expect("stalled slot");
                        e.1 = now;
                        e.2 += 1;
                        let value = e.0.clone();
                        env.broadcast(Message::Propose {
                            ballot: self.ballot,
                            slot: s,
                            value,
                        });
                    }
                }
            }
            Role::Candidate => {
                if now >= self.phase_started + self.cfg.prepare_timeout_ms {
                    self.start_phase1(env);
                }
            }
            Role::Follower => {
                let behind = (self.id as usize + self.cfg.n - self.promised.proposer as usize)
                    % self.cfg.n;
                let timeout = self.cfg.failover_ms + behind as u64 * self.cfg.failover_stagger_ms;
                let work = !self.own_pending.is_empty() || self.has_gap();
                if work && now >= self.last_progress + timeout {
                    self.start_phase1(env);
                }
            }
        }

        let mut retry = Vec::new();
        let mut done = Vec::new();
        for (e, sent) in self.own_pending.iter_mut() {
            if self.app.contains(e) {
                done.push(e.clone());
            } else if now >= *sent + self.cfg.retry_ms {
                *sent = now;
                retry.push(Operation::add(e.clone()));
            }
        }
        for e in done {
            self.own_pending.remove(&e);
        }
        if !retry.is_empty() {
            self.route(env, retry);
        }

        if self.has_gap() {
            match self.gap_since {
                None => self.gap_since = Some(now),
                Some(t) if now >= t + self.cfg.catchup_ms => {
                    self.request_catchup(env);
                    self.gap_since = Some(now);
                }
                Some(_) => {}
            }
        } else {
            self.gap_since = None;
        }
    }

    fn has_gap(&self) -> bool {
        let next = self.next_apply();
        self.max_known.is_some_and(|m| m >= next) && !self.decided.contains_key(&next)
    }

    fn request_catchup(&mut self, env: &mut dyn Env) {
        let n = self.cfg.n as ReplicaId;
        if n < 2 {
            return;
        }
        self.catchup_attempts += 1;
        let leader = self.promised.proposer;
        let t = if self.catchup_attempts % 2 == 1 && leader != self.id && leader < n {
            leader
        } else {
            let mut t = (self.catchup_target + 1) % n;
            if t == self.id {
                t = (t + 1) % n;
            }
            self.catchup_target = t;
            t
        };
        let from = self.next_apply();
        let to = self
            .max_known
            .unwrap_or(from)
            .min(from + self.cfg.catchup_span - 1);
        env.send(
            t,
            Message::CatchUp {
                from_slot: from,
                to_slot: to,
            },
        );
    }

    fn heartbeat(&mut self, env: &mut dyn Env) {
        self.last_heartbeat = env.now();
        env.broadcast(Message::Heartbeat {
            ballot: self.ballot,
            decided_upto: self.next_apply(),
        });
    }

    // ---- coordinator / proposer ----

    fn route(&mut self, env: &mut dyn Env, ops: Vec<Operation>) {
        match self.role {
            Role::Leader | Role::Candidate => self.enqueue(env, ops),
            Role::Follower => {
                let leader = self.promised.proposer;
                if leader != self.id {
                    env.send(leader, Message::ClientForward { ops });
                }
            }
        }
    }

    fn enqueue(&mut self, env: &mut dyn Env, ops: Vec<Operation>) {
        for op in ops {
            if op.kind == OpKind::AddElement && self.app.contains(&op.element) {
                continue;
            }
            if self.queued.insert(op.element.clone()) {
                self.pending.push_back(op);
            }
        }
        if self.role == Role::Leader {
            self.flush(env, false);
            if !self.pending.is_empty() && !self.batch_armed {
                self.batch_armed = true;
                env.set_timer(self.cfg.batch_timeout_ms, TimerTag::Batch);
            }
        }
    }

    fn take_batch(&mut self) -> Option<Value> {
        if self.pending.is_empty() {
            return None;
        }
        let k = self.pending.len().min(self.cfg.batch);
        Some(Value::new(self.pending.drain(..k).collect()))
    }

    fn flush(&mut self, env: &mut dyn Env, partial: bool) {
        if self.draining.is_some() {
            return;
        }
        while self.pending.len() >= self.cfg.batch || (partial && !self.pending.is_empty()) {
            let v = self.take_batch().expect("non-empty");
            let s = self.next_slot;
            self.next_slot += 1;
            self.propose(env, s, v);
        }
    }

    fn propose(&mut self, env: &mut dyn Env, slot: Slot, value: Value) {
        self.inflight.insert(slot, (value.clone(), env.now(), 0));
        env.broadcast(Message::Propose {
            ballot: self.ballot,
            slot,
            value,
        });
    }

    fn start_phase1(&mut self, env: &mut dyn Env) {
        let round = self.promised.round.max(self.ballot.round) + 1;
        self.ballot = Ballot::new(round, self.id);
        self.role = Role::Candidate;
        self.draining = None;
        self.promises.clear();
        self.prepare_from = self.next_apply();
        self.phase_started = env.now();
        self.last_progress = env.now();
        env.log("BALLOT", format_args!("prepare {}", self.ballot));
        env.broadcast(Message::Prepare {
            ballot: self.ballot,
            from_slot: self.prepare_from,
        });
    }

    fn step_down_if(&mut self, b: Ballot) {
        if self.role != Role::Follower && b > self.ballot {
            self.role = Role::Follower;
            self.pending.clear();
            self.queued.clear();
            self.inflight.clear();
            self.promises.clear();
            self.draining = None;
        }
    }

    fn on_promise(
        &mut self,
        env: &mut dyn Env,
        b: Ballot,
        acceptor: ReplicaId,
        accepted: Vec<AcceptedEntry>,
        decided: Vec<AcceptedEntry>,
    ) -> Step {
        if self.role != Role::Candidate || b != self.ballot {
            return Ok(());
        }
        self.promises.insert(acceptor, (accepted, decided));
        if self.promises.len() == self.q {
            return self.become_leader(env);
        }
        Ok(())
    }

    fn become_leader(&mut self, env: &mut dyn Env) -> Step {
        self.role = Role::Leader;
        let forget = env.fire(InjectionPoint::CoordinatorPromiseValues).is_some();
        let promises = std::mem::take(&mut self.promises);
        let mut best: BTreeMap<Slot, (Ballot, Value)> = BTreeMap::new();
        let mut max_slot: Option<Slot> = self.next_slot.checked_sub(1);
        let mut history = Vec::new();
        for (from, (accepted, decided)) in promises {
            for d in decided {
                max_slot = max_slot.max(Some(d.slot));
                if !self.decided.contains_key(&d.slot) {
                    self.on_decision(env, from, d.ballot, d.slot, d.value, true)?;
                }
            }
            if forget {
                max_slot = accepted.iter().map(|e| e.slot).max().max(max_slot);
            } else {
                history.extend(accepted);
            }
        }
        for e in history {
            max_slot = max_slot.max(Some(e.slot));
            match best.get(&e.slot) {
                Some((b, _)) if *b >= e.ballot => {}
                _ => {
                    best.insert(e.slot, (e.ballot, e.value));
                }
            }
        }
        if let Some(&d) = self.decided.keys().next_back() {
            max_slot = max_slot.max(Some(d));
        }
        let old = std::mem::take(&mut self.inflight);
        let mut requeue = Vec::new();
        let from = self.prepare_from;
        if let Some(top) = max_slot {
            for s in from..=top {
                let v = if let Some((_, v)) = best.remove(&s) {
                    v
                } else if let Some(d) = self.decided.get(&s) {
                    d.value.clone()
                } else if let Some((ov, _, _)) = old.get(&s).filter(|_| !forget) {
                    ov.clone()
                } else {
                    self.take_batch().unwrap_or_else(Value::noop)
                };
                if let Some((ov, _, _)) = old.get(&s) {
                    if *ov != v {
                        requeue.extend(ov.ops.iter().cloned());
                    }
                }
                self.propose(env, s, v);
            }
        }
        for (s, (ov, _, _)) in old {
            if s < from {
                continue;
            }
            if max_slot.is_none_or(|m| s > m) {
                requeue.extend(ov.ops);
            }
        }
        self.next_slot = max_slot.map_or(from, |m| (m + 1).max(from));
        env.log("LEADER", format_args!("{} from={} next={}{}", self.ballot, from, self.next_slot, if forget { " forgot" } else { "" }),
        );
        self.queued = self
            .pending
            .iter()
            .chain(self.inflight.values().flat_map(|(v, _, _)| v.ops.iter()))
            .map(|o| o.element.clone())
            .collect();
        let requeue: Vec<Operation> = requeue
            .into_iter()
            .filter(|o| o.kind == OpKind::AddElement)
            .collect();
        self.enqueue(env, requeue);
        self.flush(env, false);
        self.heartbeat(env);
        Ok(())
    }

    // ---- acceptor ----

    fn on_prepare(&mut self, env: &mut dyn Env, b: Ballot, from_slot: Slot) {
        if b < self.promised {
            return;
        }
        self.promised = b;
        self.last_progress = env.now();
        self.step_down_if(b);
        let decided = self
            .decided
            .range(from_slot..)
            .filter(|(_, d)| d.certified)
            .map(|(&slot, d)| AcceptedEntry {
                slot,
                ballot: d.ballot,
                value: d.value.clone(),
            })
            .collect();
        let accepted = if env.fire(InjectionPoint::AcceptorPromiseHistory).is_some() {
            Vec::new()
        } else {
            self.accepted
                .range(from_slot..)
                .map(|(&slot, (ballot, value))| AcceptedEntry {
                    slot,
                    ballot: *ballot,
                    value: value.clone(),
                })
                .collect()
        };
        env.send(
            b.proposer,
            Message::Promise {
                ballot: b,
                acceptor: self.id,
                accepted,
                decided,
            },
        );
    }

    fn on_propose(&mut self, env: &mut dyn Env, b: Ballot, slot: Slot, value: Value) {
        if b < self.promised {
            return;
        }
        self.promised = b;
        self.last_progress = env.now();
        self.step_down_if(b);
        self.accepted.insert(slot, (b, value.clone()));
        env.observe_accept(slot, b, &value);
        let vote = VoteMsg {
            ballot: b,
            slot,
            value,
            acceptor: self.id,
            checksum: self.validator.local(),
        };
        env.broadcast(Message::Vote(vote));
    }

    fn on_heartbeat(&mut self, env: &mut dyn Env, b: Ballot, decided_upto: Slot) {
        if b < self.promised {
            return;
        }
        self.promised = b;
        self.step_down_if(b);
        self.last_progress = env.now();
        if let Some(top) = decided_upto.checked_sub(1) {
            self.max_known = self.max_known.max(Some(top));
        }
    }

    fn on_catchup(&mut self, env: &mut dyn Env, from: ReplicaId, lo: Slot, hi: Slot) {
        let hi = hi.min(lo.saturating_add(self.cfg.catchup_span - 1));
        let found: Vec<(Slot, Ballot, Value, bool)> = self
            .decided
            .range(lo..=hi)
            .map(|(&s, d)| (s, d.ballot, d.value.clone(), d.certified))
            .collect();
        for (slot, ballot, value, certified) in found {
            env.send(
                from,
                Message::Decision {
                    ballot,
                    slot,
                    value,
                    certified,
                },
            );
        }
    }

    // ---- learner ----

    fn state_count(&self) -> u64 {
        self.applied_count()
    }

    fn validation_error(&self, e: ValidationError) -> DetectionRecord {
        let kind = match e {
            ValidationError::Diverged { .. } => DetectionKind::Divergence,
            ValidationError::Conflict { .. } => DetectionKind::Integrity,
        };
        detection(kind, self.state_count(), e.to_string())
    }

    fn on_vote(&mut self, env: &mut dyn Env, v: VoteMsg) -> Step {
        self.validator
            .receive(v.acceptor, v.checksum)
            .map_err(|e| self.validation_error(e))?;
        if self.decided.contains_key(&v.slot) {
            return Ok(());
        }
        let tallies = self.tallies.entry(v.slot).or_default();
        let t = match tallies.iter().position(|t| t.ballot == v.ballot) {
            Some(i) => &mut tallies[i],
            None => {
                tallies.push(BallotTally {
                    ballot: v.ballot,
                    values: Vec::new(),
                });
                tallies.last_mut().expect("just pushed")
            }
        };
        let bit = 1u64 << v.acceptor;
        if let Some((prev, _)) = t.values.iter().find(|(_, m)| m & bit != 0) {
            if *prev != v.value {
                return Err(detection(
                    DetectionKind::Integrity,
                    self.applied_count(),
                    format!(
                        "acceptor {} voted twice at s={} b={}",
                        v.acceptor, v.slot, v.ballot
                    ),
                ));
            }
            return Ok(());
        }
        let count = match t.values.iter_mut().find(|(x, _)| *x == v.value) {
            Some((_, m)) => {
                *m |= bit;
                m.count_ones() as usize
            }
            None => {
                t.values.push((v.value.clone(), bit));
                1
            }
        };
        if count >= self.q {
            return self.commit(env, v.slot, v.ballot, v.value, true);
        }
        if env.fire(InjectionPoint::LearnerCommitQuorum).is_some() {
            env.log("EARLY", format_args!("s={} b={} votes={count}", v.slot, v.ballot));
            return self.commit(env, v.slot, v.ballot, v.value, false);
        }
        Ok(())
    }

    /// A value chosen at `b` is the only value any acceptor can accept at
    /// ballots `>= b`, so an accepted entry or a vote that disagrees at
    /// such a ballot refutes the decision.
    fn refutes(&self, b: Ballot, slot: Slot, value: &Value) -> bool {
        if let Some((ab, av)) = self.accepted.get(&slot) {
            if *ab >= b && av != value {
                return true;
            }
        }
        self.tallies.get(&slot).is_some_and(|ts| {
            ts.iter()
                .filter(|t| t.ballot >= b)
                .any(|t| t.values.iter().any(|(v, _)| v != value))
        })
    }

    fn on_decision(
        &mut self,
        env: &mut dyn Env,
        from: ReplicaId,
        b: Ballot,
        slot: Slot,
        value: Value,
        certified: bool,
    ) -> Step {
        // Two quorum-backed values for one slot mean a later ballot broke
        // the Paxos invariant, so the lower ballot is the chosen one.
        let refuted = match self.decided.get_mut(&slot) {
            Some(d) if d.value == value => {
                d.certified |= certified;
                return Ok(());
            }
            Some(d) => match (d.certified, certified) {
                (true, true) => d.ballot < b,
                (true, false) => true,
                (false, true) => false,
                (false, false) => d.ballot > b,
            },
            None => !certified && self.refutes(b, slot, &value),
        };
        if refuted {
            env.detected(&detection(
                DetectionKind::Semantic,
                self.state_count(),
                format!("decision from {from} for s={slot} b={b} contradicts local knowledge"),
            ));
            return Ok(());
        }
        self.commit(env, slot, b, value, certified)
    }

    fn commit(
        &mut self,
        env: &mut dyn Env,
        slot: Slot,
        b: Ballot,
        value: Value,
        certified: bool,
    ) -> Step {
        if let Some(Decided { value: existing, .. }) = self.decided.get(&slot) {
            if *existing != value {
                return Err(detection(
                    DetectionKind::DecisionConflict,
                    self.state_count(),
                    format!(
                        "slot {slot} decided {:016x}, decision says {:016x}",
                        existing.digest(),
                        value.digest()
                    ),
                ));
            }
            return Ok(());
        }
        self.tallies.remove(&slot);
        let idx = env.log_append(&LogRecord {
            slot,
            value: value.clone(),
        });
        self.log_index.insert(slot, idx);
        self.max_known = self.max_known.max(Some(slot));
        self.last_progress = env.now();
        if self.role == Role::Leader {
            if let Some((ours, _, _)) = self.inflight.remove(&slot) {
                for op in &ours.ops {
                    self.queued.remove(&op.element);
                }
                self.acks += 1;
                env.log("ACK", format_args!("s={slot} ops={}", value.ops.len()));
                env.broadcast(Message::Decision {
                    ballot: b,
                    slot,
                    value: value.clone(),
                    certified,
                });
            }
        }
        self.decided.insert(
            slot,
            Decided {
                ballot: b,
                value,
                certified,
            },
        );
        self.apply_ready(env)
    }

    fn redundancy(&self, e: StateRedundancyError) -> DetectionRecord {
        detection(DetectionKind::StateRedundancy, 0, e.to_string())
    }

    fn apply_ready(&mut self, env: &mut dyn Env) -> Step {
        loop {
            let s = self.next_apply.read().map_err(|e| self.redundancy(e))?;
            let Some(&idx) = self.log_index.get(&s) else {
                return Ok(());
            };
            let rec = env.log_read(idx).map_err(|e| {
                detection(
                    DetectionKind::Integrity,
                    self.state_count(),
                    format!("log record {idx}: {e}"),
                )
            })?;
            if rec.slot != s || Some(&rec.value) != self.decided(s) {
                return Err(detection(
                    DetectionKind::Semantic,
                    self.state_count(),
                    format!("log record {idx} is not slot {s}"),
                ));
            }
            let before = self.applied_count.read().map_err(|e| self.redundancy(e))?;
            let h = rec.value.digest();
            self.apply_value(env, &rec.value)?;
            self.next_apply.write(s + 1);
            self.applied_hashes.push(h);
            env.log("APPLY", format_args!("s={s} count={before} v={h:016x}"));
            let after = self.applied_count.read().map_err(|e| self.redundancy(e))?;
            let every = self.cfg.checkpoint_every;
            if every > 0 && after / every > self.last_checkpoint / every {
                self.last_checkpoint = after;
                self.checkpoint(env, after, s + 1)?;
            }
        }
    }

    fn apply_value(&mut self, env: &mut dyn Env, value: &Value) -> Step {
        for op in &value.ops {
            let fault = if op.kind == OpKind::AddElement {
                env.fire(InjectionPoint::AppAddElement).map(|f| match f.add_action {
                    AddAction::Skip => AddFault::Skip,
                    AddAction::Replace => {
                        AddFault::Replace(format!("{:016x}", env.rng().gen::<u64>()))
                    }
                })
            } else {
                None
            };
            self.app.apply(op, fault.as_ref()).map_err(|e| match e {
                AppError::Semantic(d) => {
                    detection(DetectionKind::Semantic, self.state_count(), d)
                }
                AppError::Redundancy(r) => self.redundancy(r),
            })?;
            if op.origin() == Some(self.id) {
                self.own_pending.remove(&op.element);
            }
            if !op.is_transition() {
                continue;
            }
            let count = self.applied_count.read().map_err(|e| self.redundancy(e))? + 1;
            self.applied_count.write(count);
            if self.corrupt_at == Some(count) {
                let junk = format!("corrupt-{:016x}", env.rng().gen::<u64>());
                env.log("CORRUPT", format_args!("count={count} insert={junk}"));
                self.app.corrupt_silently(junk);
            }
            if count % self.cfg.window == 0 {
                let cs = StateChecksum::new(count + 1, self.app.digest_hash());
                env.log("CHECKSUM", format_args!("{cs}"));
                self.validator
                    .advance(cs)
                    .map_err(|e| self.validation_error(e))?;
            }
        }
        Ok(())
    }

    fn checkpoint(&mut self, env: &mut dyn Env, count: u64, next_slot: Slot) -> Step {
        env.checkpoint_save(count, next_slot, &self.app);
        let back = env.checkpoint_load().map_err(|e| {
            detection(
                DetectionKind::Integrity,
                count,
                format!("checkpoint: {e}"),
            )
        })?;
        match back {
            Some(b)
                if b.applied_count == count
                    && b.next_slot == next_slot
                    && b.state.digest_hash() == self.app.digest_hash() =>
            {
                Ok(())
            }
            _ => Err(detection(
                DetectionKind::Semantic,
                count,
                "checkpoint read-back differs".into(),
            )),
        }
    }
}
