use std::fmt;

use crate::app::{AppState, Operation};
use crate::hardening::codec::{Canonical, DecodeError, Decoder, Encoder};
use crate::hardening::hash64;
use crate::validation::StateChecksum;

pub use crate::validation::ReplicaId;

pub type Slot = u64;

/// Totally ordered by `(round, proposer)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Ballot {
    pub round: u64,
    pub proposer: ReplicaId,
}

impl Ballot {
    pub fn new(round: u64, proposer: ReplicaId) -> Self {
        Ballot { round, proposer }
    }
}

impl fmt::Display for Ballot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{},{}>", self.round, self.proposer)
    }
}

impl Canonical for Ballot {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.round).u32(self.proposer);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Ballot {
            round: dec.u64()?,
            proposer: dec.u32()?,
        })
    }
}

/// A batch of operations decided in one slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Value {
    pub ops: Vec<Operation>,
}

impl Value {
    pub fn new(ops: Vec<Operation>) -> Self {
        debug_assert!(!ops.is_empty());
        Value { ops }
    }

    /// Filler for slots that must be closed without client work.
    pub fn noop() -> Self {
        Value {
            ops: vec![Operation::list()],
        }
    }

    pub fn digest(&self) -> u64 {
        hash64(&self.to_canonical())
    }

    pub fn transitions(&self) -> usize {
        self.ops.iter().filter(|o| o.is_transition()).count()
    }
}

impl Canonical for Value {
    fn encode(&self, enc: &mut Encoder) {
        enc.count(self.ops.len());
        for op in &self.ops {
            op.encode(enc);
        }
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let n = dec.count()?;
        let mut ops = Vec::with_capacity(n);
        for _ in 0..n {
            ops.push(Operation::decode(dec)?);
        }
        Ok(Value { ops })
    }
}

/// An acceptor's vote, broadcast to every replica.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteMsg {
    pub ballot: Ballot,
    pub slot: Slot,
    pub value: Value,
    pub acceptor: ReplicaId,
    pub checksum: StateChecksum,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcceptedEntry {
    pub slot: Slot,
    pub ballot: Ballot,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    ClientForward {
        ops: Vec<Operation>,
    },
    Prepare {
        ballot: Ballot,
        from_slot: Slot,
    },
    /// `decided` carries what the promising replica has already learned
    /// from `from_slot` on; entry ballots are the learning ballots.
    Promise {
        ballot: Ballot,
        acceptor: ReplicaId,
        accepted: Vec<AcceptedEntry>,
        decided: Vec<AcceptedEntry>,
    },
    Propose {
        ballot: Ballot,
        slot: Slot,
        value: Value,
    },
    Vote(VoteMsg),
    /// `ballot` is the ballot at which the sender learned the value;
    /// `certified` is set when the sender counted a vote quorum for it.
    Decision {
        ballot: Ballot,
        slot: Slot,
        value: Value,
        certified: bool,
    },
    CatchUp {
        from_slot: Slot,
        to_slot: Slot,
    },
    Heartbeat {
        ballot: Ballot,
        decided_upto: Slot,
    },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::ClientForward { .. } => "forward",
            Message::Prepare { .. } => "prepare",
            Message::Promise { .. } => "promise",
            Message::Propose { .. } => "propose",
            Message::Vote(_) => "vote",
            Message::Decision { .. } => "decision",
            Message::CatchUp { .. } => "catchup",
            Message::Heartbeat { .. } => "heartbeat",
        }
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Message::ClientForward { ops } => write!(f, "forward ops={}", ops.len()),
            Message::Prepare { ballot, from_slot } => {
                write!(f, "prepare b={ballot} from={from_slot}")
            }
            Message::Promise {
                ballot,
                accepted,
                decided,
                ..
            } => write!(
                f,
                "promise b={ballot} accepted={} decided={}",
                accepted.len(),
                decided.len()
            ),
            Message::Propose { ballot, slot, value } => {
                write!(f, "propose b={ballot} s={slot} ops={}", value.ops.len())
            }
            Message::Vote(v) => write!(
                f,
                "vote b={} s={} acc={} cs={}",
                v.ballot, v.slot, v.acceptor, v.checksum
            ),
            Message::Decision {
                ballot,
                slot,
                value,
                certified,
            } => write!(
                f,
                "decision b={ballot} s={slot} ops={}{}",
                value.ops.len(),
                if *certified { " cert" } else { "" }
            ),
            Message::CatchUp { from_slot, to_slot } => {
                write!(f, "catchup {from_slot}..{to_slot}")
            }
            Message::Heartbeat {
                ballot,
                decided_upto,
            } => write!(f, "heartbeat b={ballot} upto={decided_upto}"),
        }
    }
}

fn encode_entries(enc: &mut Encoder, entries: &[AcceptedEntry]) {
    enc.count(entries.len());
    for a in entries {
        enc.u64(a.slot);
        a.ballot.encode(enc);
        a.value.encode(enc);
    }
}

fn decode_entries(dec: &mut Decoder<'_>) -> Result<Vec<AcceptedEntry>, DecodeError> {
    let n = dec.count()?;
    let mut out = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        out.push(AcceptedEntry {
            slot: dec.u64()?,
            ballot: Ballot::decode(dec)?,
            value: Value::decode(dec)?,
        });
    }
    Ok(out)
}

impl Canonical for Message {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            Message::ClientForward { ops } => {
                enc.u8(1).count(ops.len());
                for op in ops {
                    op.encode(enc);
                }
            }
            Message::Prepare { ballot, from_slot } => {
                enc.u8(2);
                ballot.encode(enc);
                enc.u64(*from_slot);
            }
            Message::Promise {
                ballot,
                acceptor,
                accepted,
                decided,
            } => {
                enc.u8(3);
                ballot.encode(enc);
                enc.u32(*acceptor);
                encode_entries(enc, accepted);
                encode_entries(enc, decided);
            }
            Message::Propose { ballot, slot, value } => {
                enc.u8(4);
                ballot.encode(enc);
                enc.u64(*slot);
                value.encode(enc);
            }
            Message::Vote(v) => {
                enc.u8(5);
                v.ballot.encode(enc);
                enc.u64(v.slot);
                v.value.encode(enc);
                enc.u32(v.acceptor);
                v.checksum.encode(enc);
            }
            Message::Decision {
                ballot,
                slot,
                value,
                certified,
            } => {
                enc.u8(6);
                ballot.encode(enc);
                enc.u64(*slot);
                value.encode(enc);
                enc.u8(u8::from(*certified));
            }
            Message::CatchUp { from_slot, to_slot } => {
                enc.u8(7).u64(*from_slot).u64(*to_slot);
            }
            Message::Heartbeat {
                ballot,
                decided_upto,
            } => {
                enc.u8(8);
                ballot.encode(enc);
                enc.u64(*decided_upto);
            }
        }
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(match dec.u8()? {
            1 => {
                let n = dec.count()?;
                let mut ops = Vec::with_capacity(n);
                for _ in 0..n {
                    ops.push(Operation::decode(dec)?);
                }
                Message::ClientForward { ops }
            }
            2 => Message::Prepare {
                ballot: Ballot::decode(dec)?,
                from_slot: dec.u64()?,
            },
            3 => {
                let ballot = Ballot::decode(dec)?;
                let acceptor = dec.u32()?;
                let accepted = decode_entries(dec)?;
                let decided = decode_entries(dec)?;
                Message::Promise {
                    ballot,
                    acceptor,
                    accepted,
                    decided,
                }
            }
            4 => Message::Propose {
                ballot: Ballot::decode(dec)?,
                slot: dec.u64()?,
                value: Value::decode(dec)?,
            },
            5 => Message::Vote(VoteMsg {
                ballot: Ballot::decode(dec)?,
                slot: dec.u64()?,
                value: Value::decode(dec)?,
                acceptor: dec.u32()?,
                checksum: StateChecksum::decode(dec)?,
            }),
            6 => Message::Decision {
                ballot: Ballot::decode(dec)?,
                slot: dec.u64()?,
                value: Value::decode(dec)?,
                certified: match dec.u8()? {
                    0 => false,
                    1 => true,
                    tag => return Err(DecodeError::BadTag { what: "certified", tag }),
                },
            },
            7 => Message::CatchUp {
                from_slot: dec.u64()?,
                to_slot: dec.u64()?,
            },
            8 => Message::Heartbeat {
                ballot: Ballot::decode(dec)?,
                decided_upto: dec.u64()?,
            },
            tag => return Err(DecodeError::BadTag { what: "message", tag }),
        })
    }
}

/// What travels inside a network envelope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub from: ReplicaId,
    pub msg: Message,
}

impl Canonical for Packet {
    fn encode(&self, enc: &mut Encoder) {
        enc.u32(self.from);
        self.msg.encode(enc);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Packet {
            from: dec.u32()?,
            msg: Message::decode(dec)?,
        })
    }
}

/// One committed slot in a replica's operation log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub slot: Slot,
    pub value: Value,
}

impl Canonical for LogRecord {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.slot);
        self.value.encode(enc);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(LogRecord {
            slot: dec.u64()?,
            value: Value::decode(dec)?,
        })
    }
}

/// Application state snapshot with the learner position it corresponds to.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub applied_count: u64,
    pub next_slot: Slot,
    pub state: AppState,
}

impl Checkpoint {
    /// Canonical bytes of a checkpoint without copying the state.
    pub fn encode_parts(applied_count: u64, next_slot: Slot, state: &AppState) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.u64(applied_count).u64(next_slot);
        state.encode(&mut enc);
        enc.finish()
    }
}

impl Canonical for Checkpoint {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.applied_count).u64(self.next_slot);
        self.state.encode(enc);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Checkpoint {
            applied_count: dec.u64()?,
            next_slot: dec.u64()?,
            state: AppState::decode(dec)?,
        })
    }
}
