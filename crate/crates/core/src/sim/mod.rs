//! Deterministic discrete-event environment for a cluster of replicas.
//!
//! One [`ChaCha8Rng`] stream drives every stochastic choice (loss, delay,
//! duplication, injection draws, corruption offsets) in dispatch order, so
//! a seed and a scenario fully determine the event log.

pub mod load;
pub mod network;
pub mod scheduler;
pub mod storage;
pub mod trace;

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::app::AppState;
use crate::fault::{corrupt_payload, InjectionPoint, Injector, Scenario};
use crate::hardening::codec::Canonical;
use crate::hardening::{seal, verify_open, DetectionKind, DetectionRecord, Envelope};
use crate::paxos::{
    Ballot, Checkpoint, Env, Firing, LogRecord, Message, Packet, Replica, ReplicaConfig,
    ReplicaId, Slot, StorageError, TimerTag, Value,
};
use crate::validation::quorum;

pub use load::LoadGenerator;
pub use network::NetParams;
pub use scheduler::{EventKind, Scheduler, SimEvent};
pub use storage::StorageLog;
pub use trace::{Trace, TraceLine};

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    /// Issue extra operations after the load, with injections disarmed, so
    /// the last windows of the run are validated too.
    pub settle: bool,
    /// Silently corrupt replica `.0` right after its transition `.1`.
    pub corrupt: Option<(ReplicaId, u64)>,
    pub no_progress_ms: u64,
    /// Hard stop, measured from the end of the arrival schedule.
    pub max_extra_ms: u64,
    pub check_every_ms: u64,
    /// Per-replica storage directories are created below this path.
    pub storage_dir: Option<PathBuf>,
    pub replica: ReplicaConfig,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            settle: true,
            corrupt: None,
            no_progress_ms: 30_000,
            max_extra_ms: 600_000,
            check_every_ms: 50,
            storage_dir: None,
            replica: ReplicaConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunEnd {
    /// Every arrival was served and all running replicas applied every
    /// decided slot.
    Completed,
    NoProgress,
    TimeCap,
    /// The event queue drained before completion.
    Idle,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimStats {
    pub sends: Vec<u64>,
    /// Sends attempted by aborted replicas; stopped at the network.
    pub blocked_sends: Vec<u64>,
    pub deliveries: u64,
    pub dropped_corrupt: u64,
    pub detections: Vec<(ReplicaId, DetectionRecord)>,
}

struct Core {
    n: usize,
    q: usize,
    sched: Scheduler,
    cur_seq: u64,
    rng: ChaCha8Rng,
    net: NetParams,
    aborted: Vec<bool>,
    storage: Vec<StorageLog>,
    injector: Injector,
    trace: Trace,
    accept_tally: HashMap<(Slot, Ballot), Vec<(u64, u64)>>,
    chosen: HashMap<Slot, Vec<u64>>,
    last_apply: u64,
    stats: SimStats,
}

impl Core {
    fn log(&mut self, target: Option<ReplicaId>, kind: &str, summary: fmt::Arguments<'_>) {
        let now = self.sched.now();
        self.trace.line(now, self.cur_seq, target, kind, summary);
    }

    fn transmit(&mut self, to: ReplicaId, envelope: Envelope) {
        for d in self.net.draw(&mut self.rng) {
            self.sched.schedule_in(
                d,
                EventKind::Deliver {
                    to,
                    envelope: envelope.clone(),
                },
            );
        }
    }

    fn detect(&mut self, who: ReplicaId, rec: DetectionRecord) {
        self.stats.detections.push((who, rec));
    }

    fn fire(&mut self, point: InjectionPoint, me: ReplicaId) -> Option<Firing> {
        let now = self.sched.now();
        let spec = self.injector.traverse(point, me, now, &mut self.rng)?;
        let firing = Firing {
            add_action: spec.add_action(),
        };
        self.log(Some(me), "INJECT", format_args!("{point}"));
        Some(firing)
    }

    /// Storage-read path shared by log records and checkpoints: the hook
    /// may flip a payload byte, then the envelope is verified.
    fn open_stored(
        &mut self,
        me: ReplicaId,
        point: InjectionPoint,
        mut env: Envelope,
    ) -> Result<Vec<u8>, StorageError> {
        if self.fire(point, me).is_some() {
            corrupt_payload(&mut env.payload, &mut self.rng);
        }
        verify_open(&env)?;
        Ok(env.payload)
    }
}

struct Ctx<'a> {
    core: &'a mut Core,
    me: ReplicaId,
}

impl Env for Ctx<'_> {
    fn now(&self) -> u64 {
        self.core.sched.now()
    }

    fn send(&mut self, to: ReplicaId, msg: Message) {
        let me = self.me as usize;
        if self.core.aborted[me] {
            self.core.stats.blocked_sends[me] += 1;
            return;
        }
        self.core.stats.sends[me] += 1;
        self.core.log(Some(self.me), "SEND", format_args!("to={to} {msg}"));
        let env = seal(Packet { from: self.me, msg }.to_canonical());
        self.core.transmit(to, env);
    }

    fn broadcast(&mut self, msg: Message) {
        let me = self.me as usize;
        if self.core.aborted[me] {
            self.core.stats.blocked_sends[me] += 1;
            return;
        }
        self.core.stats.sends[me] += 1;
        self.core.log(Some(self.me), "SEND", format_args!("to=* {msg}"));
        let env = seal(Packet { from: self.me, msg }.to_canonical());
        for to in 0..self.core.n as ReplicaId {
            self.core.transmit(to, env.clone());
        }
    }

    fn set_timer(&mut self, delay_ms: u64, tag: TimerTag) {
        self.core.sched.schedule_in(
            delay_ms,
            EventKind::Timer {
                target: self.me,
                tag,
            },
        );
    }

    fn fire(&mut self, point: InjectionPoint) -> Option<Firing> {
        self.core.fire(point, self.me)
    }

    fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.core.rng
    }

    fn log(&mut self, kind: &str, summary: fmt::Arguments<'_>) {
        if kind == "APPLY" {
            self.core.last_apply = self.core.sched.now();
        }
        self.core.log(Some(self.me), kind, summary);
    }

    fn log_append(&mut self, rec: &LogRecord) -> u64 {
        self.core.storage[self.me as usize]
            .append(seal(rec.to_canonical()))
            .expect("storage append")
    }

    fn log_read(&mut self, index: u64) -> Result<LogRecord, StorageError> {
        let env = self.core.storage[self.me as usize]
            .read(index)
            .expect("storage read")
            .ok_or(StorageError::Missing(index))?;
        let payload = self
            .core
            .open_stored(self.me, InjectionPoint::StorageLogRead, env)?;
        Ok(LogRecord::from_canonical(&payload)?)
    }

    fn checkpoint_save(&mut self, applied_count: u64, next_slot: Slot, state: &AppState) {
        let bytes = Checkpoint::encode_parts(applied_count, next_slot, state);
        self.core.storage[self.me as usize]
            .save_checkpoint(seal(bytes))
            .expect("checkpoint save");
        self.core.log(
            Some(self.me),
            "CHECKPOINT",
            format_args!("count={applied_count} next={next_slot}"),
        );
    }

    fn checkpoint_load(&mut self) -> Result<Option<Checkpoint>, StorageError> {
        let Some(env) = self.core.storage[self.me as usize]
            .load_checkpoint()
            .expect("checkpoint load")
        else {
            return Ok(None);
        };
        let payload = self
            .core
            .open_stored(self.me, InjectionPoint::CheckpointRead, env)?;
        Ok(Some(Checkpoint::from_canonical(&payload)?))
    }

    fn observe_accept(&mut self, slot: Slot, ballot: Ballot, value: &Value) {
        let h = value.digest();
        let bit = 1u64 << self.me;
        let entry = self.core.accept_tally.entry((slot, ballot)).or_default();
        let mask = match entry.iter_mut().find(|(v, _)| *v == h) {
            Some((_, m)) => {
                *m |= bit;
                *m
            }
            None => {
                entry.push((h, bit));
                bit
            }
        };
        if mask.count_ones() as usize >= self.core.q {
            let seen = self.core.chosen.entry(slot).or_default();
            if !seen.contains(&h) {
                seen.push(h);
                self.core.log(None, "CHOSEN", format_args!("s={slot} b={ballot} v={h:016x}"));
            }
        }
    }

    fn detected(&mut self, record: &DetectionRecord) {
        self.core.detect(self.me, record.clone());
        self.core.log(Some(self.me), "DETECT", format_args!("{} {}", record.kind, record.detail));
    }

    fn aborted(&mut self, record: &DetectionRecord) {
        self.core.aborted[self.me as usize] = true;
        self.core.detect(self.me, record.clone());
        self.core.log(Some(self.me), "ABORT", format_args!(
            "{} count={} {}",
            record.kind, record.state_count, record.detail
        ));
    }
}

/// A cluster of replicas plus its environment, for one seeded run.
pub struct Simulation {
    replicas: Vec<Replica>,
    core: Core,
    load: LoadGenerator,
    opts: SimOptions,
    next_arrival: Vec<u64>,
    end: Option<RunEnd>,
}

impl Simulation {
    pub fn new(sc: &Scenario, seed: u64, opts: SimOptions) -> Self {
        let n = sc.replicas;
        let mut rcfg = opts.replica.clone();
        rcfg.n = n;
        rcfg.window = sc.window;
        rcfg.batch = sc.batch;
        if let Some(c) = sc.checkpoint_every {
            rcfg.checkpoint_every = c;
        }
        let settle_ops = if opts.settle {
            (3 * sc.window).div_ceil(n as u64)
        } else {
            0
        };
        let load = LoadGenerator {
            n,
            ops_per_replica: sc.ops_per_replica,
            settle_ops,
            rate_per_replica: sc.rate,
        };
        let storage = (0..n)
            .map(|r| match &opts.storage_dir {
                Some(d) => StorageLog::file_backed(&d.join(format!("replica-{r}")))
                    .expect("create storage directory"),
                None => StorageLog::in_memory(),
            })
            .collect();
        let core = Core {
            n,
            q: quorum(n),
            sched: Scheduler::new(),
            cur_seq: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            net: NetParams {
                loss_prob: sc.loss_prob,
                dup_prob: sc.dup_prob,
                delay_min: sc.delay_ms.0,
                delay_max: sc.delay_ms.1,
            },
            aborted: vec![false; n],
            storage,
            injector: Injector::new(sc.injections.clone(), n),
            trace: Trace::new(),
            accept_tally: HashMap::new(),
            chosen: HashMap::new(),
            last_apply: 0,
            stats: SimStats {
                sends: vec![0; n],
                blocked_sends: vec![0; n],
                ..SimStats::default()
            },
        };
        let mut replicas: Vec<Replica> = (0..n as ReplicaId)
            .map(|r| Replica::new(r, rcfg.clone()))
            .collect();
        if let Some((r, t)) = opts.corrupt {
            replicas[r as usize].schedule_corruption(t);
        }
        let mut sim = Simulation {
            replicas,
            core,
            load,
            opts,
            next_arrival: vec![1; n],
            end: None,
        };
        sim.boot();
        sim
    }

    fn boot(&mut self) {
        let Simulation { replicas, core, .. } = self;
        for r in replicas.iter_mut() {
            let me = r.id();
            r.start(&mut Ctx { core, me });
        }
        for r in 0..self.core.n as ReplicaId {
            self.schedule_arrival(r);
        }
        let every = self.opts.check_every_ms;
        self.core.sched.schedule_in(every, EventKind::Check);
    }

    fn schedule_arrival(&mut self, r: ReplicaId) {
        let k = self.next_arrival[r as usize];
        if k > self.load.total_per_replica() {
            return;
        }
        let t = self.load.arrival_time(r, k);
        self.core
            .sched
            .schedule_at(t, EventKind::OpArrival { target: r, counter: k });
    }

    pub fn now(&self) -> u64 {
        self.core.sched.now()
    }

    pub fn replicas(&self) -> &[Replica] {
        &self.replicas
    }

    pub fn trace(&self) -> &Trace {
        &self.core.trace
    }

    pub fn into_trace(self) -> Trace {
        self.core.trace
    }

    pub fn stats(&self) -> &SimStats {
        &self.core.stats
    }

    pub fn injections(&self) -> u64 {
        self.core.injector.fired_total()
    }

    pub fn injections_by_replica(&self) -> &[u64] {
        self.core.injector.fired_by_replica()
    }

    pub fn load(&self) -> &LoadGenerator {
        &self.load
    }

    pub fn end(&self) -> Option<RunEnd> {
        self.end
    }

    /// Dispatches one event. Returns `false` once the run has ended.
    pub fn step(&mut self) -> bool {
        if self.end.is_some() {
            return false;
        }
        let Some(ev) = self.core.sched.step() else {
            self.end = Some(RunEnd::Idle);
            return false;
        };
        self.core.cur_seq = ev.seq;
        match ev.kind {
            EventKind::Deliver { to, envelope } => self.deliver(to, envelope),
            EventKind::Timer { target, tag } => {
                let Simulation { replicas, core, .. } = self;
                replicas[target as usize].on_timer(&mut Ctx { core, me: target }, tag);
            }
            EventKind::OpArrival { target, counter } => self.arrival(target, counter),
            EventKind::Check => self.check(),
        }
        self.end.is_none()
    }

    pub fn run(&mut self) -> RunEnd {
        while self.step() {}
        self.end.expect("ended")
    }

    fn deliver(&mut self, to: ReplicaId, mut envelope: Envelope) {
        if self.core.aborted[to as usize] {
            return;
        }
        self.core.stats.deliveries += 1;
        if self.core.fire(InjectionPoint::NetMsgReceived, to).is_some() {
            corrupt_payload(&mut envelope.payload, &mut self.core.rng);
        }
        let pkt = match verify_open(&envelope)
            .map_err(|e| e.to_string())
            .and_then(|p| Packet::from_canonical(p).map_err(|e| e.to_string()))
        {
            Ok(p) => p,
            Err(e) => {
                self.core.stats.dropped_corrupt += 1;
                let rec = DetectionRecord {
                    kind: DetectionKind::Integrity,
                    state_count: self.replicas[to as usize].applied_count(),
                    detail: format!("message dropped: {e}"),
                };
                self.core.log(Some(to), "DETECT", format_args!("{} {}", rec.kind, rec.detail));
                self.core.detect(to, rec);
                return;
            }
        };
        self.core.log(Some(to), "DELIVER", format_args!("from={} {}", pkt.from, pkt.msg));
        let Simulation { replicas, core, .. } = self;
        replicas[to as usize].on_packet(&mut Ctx { core, me: to }, pkt);
    }

    fn arrival(&mut self, r: ReplicaId, k: u64) {
        if self.load.is_settle(k) && !self.core.injector.is_empty() {
            self.core.injector.disarm();
        }
        let op = self.load.operation(r, k);
        if !self.core.aborted[r as usize] {
            self.core.log(Some(r), "OP_ARRIVAL", format_args!("{op}"));
            let Simulation { replicas, core, .. } = self;
            replicas[r as usize].on_client_op(&mut Ctx { core, me: r }, op);
        }
        self.next_arrival[r as usize] = k + 1;
        self.schedule_arrival(r);
    }

    fn arrivals_done(&self) -> bool {
        let total = self.load.total_per_replica();
        self.next_arrival.iter().all(|&k| k > total)
    }

    /// True when every running replica has served its own operations and
    /// applied every slot any running replica decided.
    pub fn quiescent(&self) -> bool {
        let running: Vec<&Replica> = self.replicas.iter().filter(|r| r.is_running()).collect();
        if running.is_empty() {
            return true;
        }
        let top = running.iter().filter_map(|r| r.max_decided()).max();
        let want = top.map_or(0, |s| s + 1);
        running
            .iter()
            .all(|r| r.own_pending() == 0 && r.next_apply() == want)
    }

    fn check(&mut self) {
        let now = self.core.sched.now();
        if self.arrivals_done() && self.quiescent() {
            self.end = Some(RunEnd::Completed);
        } else if now >= self.core.last_apply + self.opts.no_progress_ms {
            self.end = Some(RunEnd::NoProgress);
        } else if now >= self.load.arrival_time(self.core.n as ReplicaId - 1, self.load.total_per_replica().max(1))
            + self.opts.max_extra_ms
        {
            self.end = Some(RunEnd::TimeCap);
        }
        if let Some(e) = self.end {
            self.core.log(None, "END", format_args!("{e:?} t={now}"));
        } else {
            let every = self.opts.check_every_ms;
            self.core.sched.schedule_in(every, EventKind::Check);
        }
    }
}
