use std::fmt::{self, Write};

use crate::hardening::hash64;
use crate::paxos::ReplicaId;

/// Line-oriented event log: `<time_ms> <seq> <target> <kind> <summary>`.
/// The target is a replica id, or `sim` for the scheduler itself.
#[derive(Debug, Default, Clone)]
pub struct Trace {
    text: String,
    lines: u64,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn line(
        &mut self,
        time: u64,
        seq: u64,
        target: Option<ReplicaId>,
        kind: &str,
        summary: fmt::Arguments<'_>,
    ) {
        match target {
            Some(r) => writeln!(self.text, "{time} {seq} {r} {kind} {summary}"),
            None => writeln!(self.text, "{time} {seq} sim {kind} {summary}"),
        }
        .expect("writing to a String");
        self.lines += 1;
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn into_text(self) -> String {
        self.text
    }

    pub fn lines(&self) -> u64 {
        self.lines
    }

    pub fn digest(&self) -> u64 {
        hash64(self.text.as_bytes())
    }
}

/// One parsed log line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceLine<'a> {
    pub time: u64,
    pub seq: u64,
    pub target: Option<ReplicaId>,
    pub kind: &'a str,
    pub summary: &'a str,
}

impl<'a> TraceLine<'a> {
    pub fn parse(line: &'a str) -> Option<Self> {
        let mut it = line.splitn(5, ' ');
        let time = it.next()?.parse().ok()?;
        let seq = it.next()?.parse().ok()?;
        let target = match it.next()? {
            "sim" => None,
            r => Some(r.parse().ok()?),
        };
        let kind = it.next()?;
        let summary = it.next().unwrap_or("");
        Some(TraceLine {
            time,
            seq,
            target,
            kind,
            summary,
        })
    }

    /// Value of a `key=value` field in the summary.
    pub fn field(&self, key: &str) -> Option<&'a str> {
        self.summary.split(' ').find_map(|tok| {
            let (k, v) = tok.split_once('=')?;
            (k == key).then_some(v)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_and_parse() {
        let mut t = Trace::new();
        t.line(12, 7, Some(3), "APPLY", format_args!("s=4 count=40 v=00ff"));
        t.line(13, 8, None, "CHOSEN", format_args!("s=4"));
        assert_eq!(t.text(), "12 7 3 APPLY s=4 count=40 v=00ff\n13 8 sim CHOSEN s=4\n");
        let l = TraceLine::parse(t.text().lines().next().unwrap()).unwrap();
        assert_eq!(l.target, Some(3));
        assert_eq!(l.kind, "APPLY");
        assert_eq!(l.field("count"), Some("40"));
        assert_eq!(l.field("x"), None);
        assert_eq!(t.lines(), 2);
    }
}
