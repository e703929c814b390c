//! Post-run checks computed from the event log alone.

use std::collections::{BTreeMap, HashMap};

use crate::paxos::{ReplicaId, Slot};
use crate::sim::TraceLine;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceAnalysis {
    /// Messages each replica sent after its own ABORT line.
    pub sends_after_abort: BTreeMap<ReplicaId, u64>,
    pub aborted: BTreeMap<ReplicaId, String>,
    /// Replica → index `k` of the first checksum (generated at transition
    /// `kW`) that reflects the replica's first divergence from the chosen
    /// value sequence.
    pub divergence_window: BTreeMap<ReplicaId, u64>,
    /// Largest number of replicas whose first divergence lands in the same
    /// window.
    pub max_diverged_in_window: usize,
}

impl TraceAnalysis {
    pub fn total_sends_after_abort(&self) -> u64 {
        self.sends_after_abort.values().sum()
    }
}

struct Apply {
    slot: Slot,
    count: u64,
    value: u64,
}

fn hex(s: &str) -> Option<u64> {
    u64::from_str_radix(s, 16).ok()
}

/// Reads a full event log. `window` is the validation window size of the
/// run.
pub fn analyze_trace(text: &str, window: u64) -> TraceAnalysis {
    let mut out = TraceAnalysis::default();
    let mut chosen: HashMap<Slot, u64> = HashMap::new();
    let mut applies: BTreeMap<ReplicaId, Vec<Apply>> = BTreeMap::new();
    let mut corrupt: BTreeMap<ReplicaId, u64> = BTreeMap::new();

    for raw in text.lines() {
        let Some(l) = TraceLine::parse(raw) else {
            continue;
        };
        match (l.kind, l.target) {
            ("ABORT", Some(r)) => {
                out.aborted.entry(r).or_insert_with(|| l.summary.to_string());
                out.sends_after_abort.entry(r).or_insert(0);
            }
            ("SEND", Some(r)) => {
                if let Some(c) = out.sends_after_abort.get_mut(&r) {
                    *c += 1;
                }
            }
            ("CHOSEN", None) => {
                if let (Some(s), Some(v)) = (
                    l.field("s").and_then(|s| s.parse().ok()),
                    l.field("v").and_then(hex),
                ) {
                    chosen.entry(s).or_insert(v);
                }
            }
            ("APPLY", Some(r)) => {
                if let (Some(slot), Some(count), Some(value)) = (
                    l.field("s").and_then(|s| s.parse().ok()),
                    l.field("count").and_then(|s| s.parse().ok()),
                    l.field("v").and_then(hex),
                ) {
                    applies.entry(r).or_default().push(Apply { slot, count, value });
                }
            }
            ("CORRUPT", Some(r)) => {
                if let Some(c) = l.field("count").and_then(|s| s.parse().ok()) {
                    corrupt.entry(r).or_insert(c);
                }
            }
            _ => {}
        }
    }

    // Slots no CHOSEN line covers fall back to the most common applied value.
    let mut votes: HashMap<Slot, HashMap<u64, usize>> = HashMap::new();
    for list in applies.values() {
        for a in list {
            if !chosen.contains_key(&a.slot) {
                *votes.entry(a.slot).or_default().entry(a.value).or_default() += 1;
            }
        }
    }
    for (slot, m) in votes {
        let mut best: Vec<(u64, usize)> = m.into_iter().collect();
        best.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        chosen.insert(slot, best[0].0);
    }

    let w = window.max(1);
    let replicas: std::collections::BTreeSet<ReplicaId> =
        applies.keys().chain(corrupt.keys()).copied().collect();
    for r in replicas {
        let from_apply = applies.get(&r).and_then(|list| {
            list.iter()
                .find(|a| chosen.get(&a.slot) != Some(&a.value))
                .map(|a| a.count / w + 1)
        });
        let from_corrupt = corrupt.get(&r).map(|&t| t.div_ceil(w));
        let k = match (from_apply, from_corrupt) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        if let Some(k) = k {
            out.divergence_window.insert(r, k);
        }
    }
    let mut per_window: BTreeMap<u64, usize> = BTreeMap::new();
    for &k in out.divergence_window.values() {
        *per_window.entry(k).or_default() += 1;
    }
    out.max_diverged_in_window = per_window.values().copied().max().unwrap_or(0);
    out
}
