//! Local detection of non-malicious faults.
//!
//! Everything a replica sends over the network or writes to storage travels
//! inside an [`Envelope`]: the canonical payload bytes plus a 64-bit FNV-1a
//! checksum. Reads recompute the checksum before the payload is used.
//! Divergence-critical scalars are kept in [`MirroredCell`]s and compared on
//! every access. Every detection produces a [`DetectionRecord`].

pub mod codec;

use std::fmt;

use thiserror::Error;

pub const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a 64 over `bytes`.
pub fn hash64(bytes: &[u8]) -> u64 {
    let mut h = Fnv64::new();
    h.write(bytes);
    h.finish()
}

/// Streaming form of [`hash64`]; feeding the same bytes in any chunking
/// gives the same digest.
#[derive(Debug, Clone, Copy)]
pub struct Fnv64(u64);

impl Fnv64 {
    pub fn new() -> Self {
        Fnv64(FNV_OFFSET_BASIS)
    }

    #[inline]
    pub fn write(&mut self, bytes: &[u8]) {
        let mut h = self.0;
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
        self.0 = h;
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv64 {
    fn default() -> Self {
        Self::new()
    }
}

/// Checksummed carrier for a canonical payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub payload: Vec<u8>,
    pub checksum: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("checksum mismatch: attached {attached:#018x}, computed {computed:#018x}")]
pub struct IntegrityError {
    pub attached: u64,
    pub computed: u64,
}

pub fn seal(payload: Vec<u8>) -> Envelope {
    let checksum = hash64(&payload);
    Envelope { payload, checksum }
}

/// Returns the payload iff it still hashes to the attached checksum.
pub fn verify_open(env: &Envelope) -> Result<&[u8], IntegrityError> {
    let computed = hash64(&env.payload);
    if computed == env.checksum {
        Ok(&env.payload)
    } else {
        Err(IntegrityError {
            attached: env.checksum,
            computed,
        })
    }
}

impl Envelope {
    /// Byte form used by file-backed storage: `u32` payload length, payload,
    /// `u64` checksum, all big-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.payload.len() + 12);
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out.extend_from_slice(&self.checksum.to_be_bytes());
        out
    }

    /// Parses one envelope from the front of `bytes`, returning it and the
    /// number of bytes consumed. The checksum is not verified here.
    pub fn from_bytes(bytes: &[u8]) -> Option<(Envelope, usize)> {
        let len = u32::from_be_bytes(bytes.get(..4)?.try_into().ok()?) as usize;
        let payload = bytes.get(4..4 + len)?.to_vec();
        let checksum = u64::from_be_bytes(bytes.get(4 + len..12 + len)?.try_into().ok()?);
        Some((Envelope { payload, checksum }, 12 + len))
    }
}

/// A value stored twice. Reads compare both copies.
#[derive(Debug, Clone)]
pub struct MirroredCell<T> {
    value: T,
    shadow: T,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("mirrored value {value} disagrees with shadow {shadow}")]
pub struct StateRedundancyError {
    pub value: String,
    pub shadow: String,
}

impl<T: Clone + PartialEq + fmt::Debug> MirroredCell<T> {
    pub fn new(v: T) -> Self {
        MirroredCell {
            shadow: v.clone(),
            value: v,
        }
    }

    pub fn read(&self) -> Result<T, StateRedundancyError> {
        if self.value == self.shadow {
            Ok(self.value.clone())
        } else {
            Err(StateRedundancyError {
                value: format!("{:?}", self.value),
                shadow: format!("{:?}", self.shadow),
            })
        }
    }

    pub fn write(&mut self, v: T) {
        self.shadow = v.clone();
        self.value = v;
    }

    /// Overwrites only the shadow copy. Used to model memory corruption.
    pub fn corrupt_shadow(&mut self, v: T) {
        self.shadow = v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DetectionKind {
    Integrity,
    StateRedundancy,
    Semantic,
    Divergence,
    DecisionConflict,
}

impl DetectionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectionKind::Integrity => "INTEGRITY",
            DetectionKind::StateRedundancy => "STATE_REDUNDANCY",
            DetectionKind::Semantic => "SEMANTIC",
            DetectionKind::Divergence => "DIVERGENCE",
            DetectionKind::DecisionConflict => "DECISION_CONFLICT",
        }
    }
}

impl fmt::Display for DetectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One detection event. `state_count` is the detecting replica's applied
/// transition count at the moment of detection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionRecord {
    pub kind: DetectionKind,
    pub state_count: u64,
    pub detail: String,
}

impl fmt::Display for DetectionRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.kind, self.state_count, self.detail)
    }
}
