use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::hardening::Envelope;
use crate::paxos::{ReplicaId, TimerTag};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    Deliver { to: ReplicaId, envelope: Envelope },
    Timer { target: ReplicaId, tag: TimerTag },
    OpArrival { target: ReplicaId, counter: u64 },
    /// Periodic completion and timeout check.
    Check,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimEvent {
    pub time: u64,
    pub seq: u64,
    pub kind: EventKind,
}

impl Ord for SimEvent {
    // Reversed so the max-heap pops the smallest (time, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Virtual clock plus a queue ordered by `(time, seq)`.
#[derive(Debug, Default)]
pub struct Scheduler {
    now: u64,
    next_seq: u64,
    queue: BinaryHeap<SimEvent>,
}

impl Scheduler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn schedule_at(&mut self, time: u64, kind: EventKind) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(SimEvent {
            time: time.max(self.now),
            seq,
            kind,
        });
        seq
    }

    pub fn schedule_in(&mut self, delay: u64, kind: EventKind) -> u64 {
        self.schedule_at(self.now + delay, kind)
    }

    /// Pops the next event and advances the clock to it; `None` when idle.
    pub fn step(&mut self) -> Option<SimEvent> {
        let ev = self.queue.pop()?;
        debug_assert!(ev.time >= self.now);
        self.now = ev.time;
        Some(ev)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arrival(t: ReplicaId) -> EventKind {
        EventKind::OpArrival {
            target: t,
            counter: 1,
        }
    }

    #[test]
    fn earlier_time_first() {
        let mut s = Scheduler::new();
        s.schedule_at(5, arrival(0));
        s.schedule_at(3, arrival(1));
        assert_eq!(s.step().unwrap().time, 3);
        assert_eq!(s.now(), 3);
        assert_eq!(s.step().unwrap().time, 5);
        assert!(s.step().is_none());
    }

    #[test]
    fn equal_time_lower_seq_first() {
        let mut s = Scheduler::new();
        let a = s.schedule_at(4, arrival(0));
        let b = s.schedule_at(4, arrival(1));
        assert!(a < b);
        assert_eq!(s.step().unwrap().seq, a);
        assert_eq!(s.step().unwrap().seq, b);
    }

    #[test]
    fn clock_never_goes_back() {
        let mut s = Scheduler::new();
        s.schedule_at(10, arrival(0));
        s.step();
        s.schedule_at(2, arrival(0));
        assert_eq!(s.step().unwrap().time, 10);
    }
}
