//! Replicas driven by hand through an in-memory environment: every message
//! is delivered explicitly, so each test spells out the round it checks.

use std::collections::VecDeque;
use std::fmt;

use hardened_paxos::app::{AppState, Operation};
use hardened_paxos::fault::InjectionPoint;
use hardened_paxos::hardening::{DetectionKind, DetectionRecord};
use hardened_paxos::paxos::{
    AcceptedEntry, Ballot, Checkpoint, Env, Firing, LogRecord, Message, Packet, Replica, ReplicaConfig,
    ReplicaId, Role, Slot, StorageError, TimerTag, Value,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct TestEnv {
    me: ReplicaId,
    n: usize,
    now: u64,
    /// (to, packet) in send order.
    out: Vec<(ReplicaId, Packet)>,
    rng: ChaCha8Rng,
    log: Vec<LogRecord>,
    checkpoint: Option<Checkpoint>,
    detected: Vec<DetectionRecord>,
    aborted: Vec<DetectionRecord>,
    lines: Vec<String>,
}

impl TestEnv {
    fn new(me: ReplicaId, n: usize) -> Self {
        TestEnv {
            me,
            n,
            now: 0,
            out: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(u64::from(me)),
            log: Vec::new(),
            checkpoint: None,
            detected: Vec::new(),
            aborted: Vec::new(),
            lines: Vec::new(),
        }
    }
}

impl Env for TestEnv {
    fn now(&self) -> u64 {
        self.now
    }

    fn send(&mut self, to: ReplicaId, msg: Message) {
        self.out.push((to, Packet { from: self.me, msg }));
    }

    fn broadcast(&mut self, msg: Message) {
        for to in 0..self.n as ReplicaId {
            self.send(to, msg.clone());
        }
    }

    fn set_timer(&mut self, _delay_ms: u64, _tag: TimerTag) {}

    fn fire(&mut self, _point: InjectionPoint) -> Option<Firing> {
        None
    }

    fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn log(&mut self, kind: &str, summary: fmt::Arguments<'_>) {
        self.lines.push(format!("{kind} {summary}"));
    }

    fn log_append(&mut self, rec: &LogRecord) -> u64 {
        self.log.push(rec.clone());
        self.log.len() as u64 - 1
    }

    fn log_read(&mut self, index: u64) -> Result<LogRecord, StorageError> {
        self.log.get(index as usize).cloned().ok_or(StorageError::Missing(index))
    }

    fn checkpoint_save(&mut self, applied_count: u64, next_slot: Slot, state: &AppState) {
        self.checkpoint = Some(Checkpoint {
            applied_count,
            next_slot,
            state: state.clone(),
        });
    }

    fn checkpoint_load(&mut self) -> Result<Option<Checkpoint>, StorageError> {
        Ok(self.checkpoint.clone())
    }

    fn observe_accept(&mut self, _slot: Slot, _ballot: Ballot, _value: &Value) {}

    fn detected(&mut self, record: &DetectionRecord) {
        self.detected.push(record.clone());
    }

    fn aborted(&mut self, record: &DetectionRecord) {
        self.aborted.push(record.clone());
    }
}

struct Cluster {
    replicas: Vec<Replica>,
    envs: Vec<TestEnv>,
    queue: VecDeque<(ReplicaId, Packet)>,
}

impl Cluster {
    fn new(n: usize) -> Self {
        let cfg = ReplicaConfig {
            n,
            batch: 1,
            ..ReplicaConfig::default()
        };
        let mut replicas: Vec<Replica> = (0..n as ReplicaId).map(|i| Replica::new(i, cfg.clone())).collect();
        let mut envs: Vec<TestEnv> = (0..n as ReplicaId).map(|i| TestEnv::new(i, n)).collect();
        for (r, e) in replicas.iter_mut().zip(envs.iter_mut()) {
            r.start(e);
        }
        let mut c = Cluster {
            replicas,
            envs,
            queue: VecDeque::new(),
        };
        c.collect();
        c
    }

    fn collect(&mut self) {
        for e in &mut self.envs {
            self.queue.extend(e.out.drain(..));
        }
    }

    fn set_now(&mut self, t: u64) {
        for e in &mut self.envs {
            e.now = t;
        }
    }

    fn client(&mut self, at: ReplicaId, op: Operation) {
        let i = at as usize;
        self.replicas[i].on_client_op(&mut self.envs[i], op);
        self.collect();
    }

    fn tick(&mut self, r: ReplicaId) {
        let i = r as usize;
        self.replicas[i].on_timer(&mut self.envs[i], TimerTag::Tick);
        self.collect();
    }

    fn flush_batch(&mut self, r: ReplicaId) {
        let i = r as usize;
        self.replicas[i].on_timer(&mut self.envs[i], TimerTag::Batch);
        self.collect();
    }

    /// Delivers queued packets in FIFO order until the queue is empty,
    /// skipping anything `drop` rejects.
    fn run(&mut self, mut drop: impl FnMut(ReplicaId, &Packet) -> bool) -> usize {
        let mut delivered = 0;
        while let Some((to, pkt)) = self.queue.pop_front() {
            if drop(to, &pkt) {
                continue;
            }
            let i = to as usize;
            self.replicas[i].on_packet(&mut self.envs[i], pkt);
            self.collect();
            delivered += 1;
        }
        delivered
    }

    fn deliver_all(&mut self) -> usize {
        self.run(|_, _| false)
    }
}

fn kinds(c: &Cluster) -> Vec<&'static str> {
    c.queue.iter().map(|(_, p)| p.msg.kind()).collect()
}

#[test]
fn three_replica_round_commits_on_majority() {
    let mut c = Cluster::new(3);
    c.deliver_all();
    c.client(0, Operation::add("alpha"));
    c.flush_batch(0);
    // A single broadcast Propose for slot 0 at <0,0>.
    let proposes: Vec<_> = c
        .queue
        .iter()
        .filter_map(|(to, p)| match &p.msg {
            Message::Propose { ballot, slot, value } => Some((*to, *ballot, *slot, value.clone())),
            _ => None,
        })
        .collect();
    assert_eq!(proposes.len(), 3);
    for (_, b, s, v) in &proposes {
        assert_eq!(*b, Ballot::new(0, 0));
        assert_eq!(*s, 0);
        assert_eq!(v.ops, vec![Operation::add("alpha")]);
    }

    // Deliver the proposals only; each acceptor answers with a vote to all.
    let props: Vec<_> = c.queue.drain(..).collect();
    for (to, pkt) in props {
        let i = to as usize;
        c.replicas[i].on_packet(&mut c.envs[i], pkt);
        c.collect();
    }
    let votes = kinds(&c).iter().filter(|k| **k == "vote").count();
    assert_eq!(votes, 9);

    // Each learner commits after the second vote it receives (q = 2).
    let mut seen = [0usize; 3];
    let mut committed_after = [None; 3];
    while let Some((to, pkt)) = c.queue.pop_front() {
        let i = to as usize;
        let is_vote = matches!(pkt.msg, Message::Vote(_));
        c.replicas[i].on_packet(&mut c.envs[i], pkt);
        c.collect();
        if is_vote {
            seen[i] += 1;
            if committed_after[i].is_none() && c.replicas[i].decided(0).is_some() {
                committed_after[i] = Some(seen[i]);
            }
        }
    }
    assert_eq!(committed_after, [Some(2); 3]);
    for r in &c.replicas {
        assert!(r.app().contains("alpha"));
        assert_eq!(r.applied_count(), 1);
    }
    let digests: Vec<u64> = c.replicas.iter().map(|r| r.app().digest_hash()).collect();
    assert!(digests.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn one_vote_is_not_a_quorum_for_five() {
    let mut c = Cluster::new(5);
    c.deliver_all();
    c.client(0, Operation::add("x"));
    c.flush_batch(0);
    // Only acceptors 0 and 1 get the proposal.
    c.run(|to, p| matches!(p.msg, Message::Propose { .. }) && to > 1);
    for r in &c.replicas {
        assert!(r.decided(0).is_none(), "replica {} decided on two votes", r.id());
    }
}

#[test]
fn promise_reports_highest_accepted_ballot() {
    let mut c = Cluster::new(3);
    c.deliver_all();
    c.client(0, Operation::add("a"));
    c.flush_batch(0);
    // Replica 2 accepts but nobody learns.
    c.run(|to, p| !(to == 2 && matches!(p.msg, Message::Propose { .. })));
    assert!(c.replicas[2].accepted(0).is_some());

    let b = Ballot::new(3, 1);
    c.replicas[2].on_packet(
        &mut c.envs[2],
        Packet {
            from: 1,
            msg: Message::Prepare { ballot: b, from_slot: 0 },
        },
    );
    let promise = c.envs[2].out.drain(..).find_map(|(_, p)| match p.msg {
        Message::Promise { ballot, accepted, .. } => Some((ballot, accepted)),
        _ => None,
    });
    let (pb, accepted) = promise.expect("promise sent");
    assert_eq!(pb, b);
    assert_eq!(
        accepted,
        vec![AcceptedEntry {
            slot: 0,
            ballot: Ballot::new(0, 0),
            value: Value::new(vec![Operation::add("a")]),
        }]
    );
    assert_eq!(c.replicas[2].promised(), b);

    // A lower ballot gets no answer.
    c.replicas[2].on_packet(
        &mut c.envs[2],
        Packet {
            from: 0,
            msg: Message::Prepare {
                ballot: Ballot::new(1, 0),
                from_slot: 0,
            },
        },
    );
    assert!(c.envs[2].out.is_empty());
}

#[test]
fn failover_reproposes_accepted_value() {
    let mut c = Cluster::new(3);
    c.deliver_all();
    c.client(0, Operation::add("keep"));
    c.flush_batch(0);
    // Acceptor 1 accepts, its vote is lost, and leader 0 goes silent.
    c.run(|to, p| to == 2 || matches!(p.msg, Message::Vote(_)) || p.from == 0 && to != 1);
    assert!(c.replicas[1].accepted(0).is_some());
    assert!(c.replicas[1].decided(0).is_none());

    // Replica 1 has a gap to fill, so after the failover timeout it runs
    // phase 1 at the next round.
    c.client(1, Operation::add("later"));
    c.queue.clear();
    c.set_now(10_000);
    c.tick(1);
    let prepare = c.queue.iter().find_map(|(_, p)| match p.msg {
        Message::Prepare { ballot, .. } => Some(ballot),
        _ => None,
    });
    assert_eq!(prepare, Some(Ballot::new(1, 1)));

    // Replica 0 stays down; 1 and 2 finish the round.
    c.run(|to, p| to == 0 || p.from == 0);
    assert_eq!(c.replicas[1].role(), Role::Leader);
    for r in &c.replicas[1..] {
        assert_eq!(r.decided(0).map(|v| v.ops.clone()), Some(vec![Operation::add("keep")]));
    }
}

#[test]
fn conflicting_certified_decision_aborts_and_silences() {
    let mut c = Cluster::new(3);
    c.deliver_all();
    c.client(0, Operation::add("a"));
    c.flush_batch(0);
    c.deliver_all();
    assert!(c.replicas[2].decided(0).is_some());

    // A certified decision for slot 0 at a lower ballot with another value.
    c.replicas[2].on_packet(
        &mut c.envs[2],
        Packet {
            from: 1,
            msg: Message::Decision {
                ballot: Ballot::default(),
                slot: 0,
                value: Value::new(vec![Operation::add("b")]),
                certified: true,
            },
        },
    );
    assert!(!c.replicas[2].is_running());
    assert_eq!(c.envs[2].aborted.len(), 1);
    assert_eq!(c.envs[2].aborted[0].kind, DetectionKind::DecisionConflict);

    // Nothing goes out from an aborted replica, whatever it receives.
    c.envs[2].out.clear();
    c.replicas[2].on_client_op(&mut c.envs[2], Operation::add("z"));
    c.replicas[2].on_timer(&mut c.envs[2], TimerTag::Tick);
    c.replicas[2].on_packet(
        &mut c.envs[2],
        Packet {
            from: 0,
            msg: Message::CatchUp { from_slot: 0, to_slot: 5 },
        },
    );
    assert!(c.envs[2].out.is_empty());
    assert_eq!(c.envs[2].aborted.len(), 1);
}

#[test]
fn uncertified_decision_contradicting_own_vote_is_dropped() {
    let mut c = Cluster::new(3);
    c.deliver_all();
    c.client(0, Operation::add("a"));
    c.flush_batch(0);
    // Replica 2 sees the proposal and nothing else.
    c.run(|to, p| to == 2 && !matches!(p.msg, Message::Propose { .. }));
    assert!(c.replicas[2].accepted(0).is_some());
    assert!(c.replicas[2].decided(0).is_none());

    c.replicas[2].on_packet(
        &mut c.envs[2],
        Packet {
            from: 1,
            msg: Message::Decision {
                ballot: Ballot::default(),
                slot: 0,
                value: Value::new(vec![Operation::add("other")]),
                certified: false,
            },
        },
    );
    assert!(c.replicas[2].is_running());
    assert!(c.replicas[2].decided(0).is_none());
    assert_eq!(c.envs[2].detected.len(), 1);
    assert_eq!(c.envs[2].detected[0].kind, DetectionKind::Semantic);
}
