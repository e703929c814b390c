use crate::app::Operation;
use crate::paxos::ReplicaId;

/// Deterministic ADD arrival schedule. The `k`-th operation (from 1) at
/// replica `r` carries the element `"k-r"`; replicas are offset by a
/// fraction of the inter-arrival gap so arrivals interleave.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadGenerator {
    pub n: usize,
    pub ops_per_replica: u64,
    /// Operations issued after the regular load, with injections disarmed.
    pub settle_ops: u64,
    pub rate_per_replica: f64,
}

impl LoadGenerator {
    pub fn interval_ms(&self) -> f64 {
        1000.0 / self.rate_per_replica
    }

    pub fn total_per_replica(&self) -> u64 {
        self.ops_per_replica + self.settle_ops
    }

    pub fn is_settle(&self, k: u64) -> bool {
        k > self.ops_per_replica
    }

    pub fn arrival_time(&self, r: ReplicaId, k: u64) -> u64 {
        let slot = (k - 1) as f64 + r as f64 / self.n as f64;
        (slot * self.interval_ms()).floor() as u64
    }

    pub fn operation(&self, r: ReplicaId, k: u64) -> Operation {
        Operation::generated(k, r)
    }

    /// Time of the last regular (non-settle) arrival.
    pub fn load_end(&self) -> u64 {
        if self.ops_per_replica == 0 {
            return 0;
        }
        self.arrival_time(self.n as ReplicaId - 1, self.ops_per_replica)
    }

    /// Full schedule ordered by time then replica.
    pub fn schedule(&self) -> Vec<(u64, ReplicaId, Operation)> {
        let mut v = Vec::new();
        for r in 0..self.n as ReplicaId {
            for k in 1..=self.total_per_replica() {
                v.push((self.arrival_time(r, k), r, self.operation(r, k)));
            }
        }
        v.sort_by_key(|(t, r, _)| (*t, *r));
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen(rate: f64, ops: u64) -> LoadGenerator {
        LoadGenerator {
            n: 5,
            ops_per_replica: ops,
            settle_ops: 0,
            rate_per_replica: rate,
        }
    }

    #[test]
    fn ten_per_second_for_one_second() {
        let g = gen(10.0, 10);
        let s = g.schedule();
        assert_eq!(s.len(), 50);
        assert!(s.iter().all(|(t, _, _)| *t < 1000));
    }

    #[test]
    fn third_op_at_replica_two() {
        assert_eq!(gen(10.0, 10).operation(2, 3).element, "3-2");
    }

    #[test]
    fn schedule_is_fixed() {
        assert_eq!(gen(250.0, 40).schedule(), gen(250.0, 40).schedule());
    }
}
