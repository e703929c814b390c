//! Replicated hash table of strings, the test application.
//!
//! Every applied operation is followed by a semantic check of its intended
//! effect, and the element count lives in a [`MirroredCell`].

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::hardening::codec::{Canonical, DecodeError, Decoder, Encoder};
use crate::hardening::{Fnv64, MirroredCell, StateRedundancyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    AddElement,
    RemoveElement,
    ListElements,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Operation {
    pub kind: OpKind,
    pub element: String,
}

impl Operation {
    pub fn add(element: impl Into<String>) -> Self {
        Operation {
            kind: OpKind::AddElement,
            element: element.into(),
        }
    }

    pub fn remove(element: impl Into<String>) -> Self {
        Operation {
            kind: OpKind::RemoveElement,
            element: element.into(),
        }
    }

    pub fn list() -> Self {
        Operation {
            kind: OpKind::ListElements,
            element: String::new(),
        }
    }

    /// Element string used by the load generator: the per-replica counter
    /// followed by the originating replica id.
    pub fn generated(counter: u64, replica: u32) -> Self {
        Operation::add(format!("{counter}-{replica}"))
    }

    /// Read-only operations do not count as state transitions.
    pub fn is_transition(&self) -> bool {
        self.kind != OpKind::ListElements
    }

    /// Originating replica of a generated element, if the element has the
    /// load generator's shape.
    pub fn origin(&self) -> Option<u32> {
        let (_, r) = self.element.rsplit_once('-')?;
        r.parse().ok()
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            OpKind::AddElement => write!(f, "add({})", self.element),
            OpKind::RemoveElement => write!(f, "remove({})", self.element),
            OpKind::ListElements => f.write_str("list"),
        }
    }
}

impl Canonical for Operation {
    fn encode(&self, enc: &mut Encoder) {
        let tag = match self.kind {
            OpKind::AddElement => 0,
            OpKind::RemoveElement => 1,
            OpKind::ListElements => 2,
        };
        enc.u8(tag).str(&self.element);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let kind = match dec.u8()? {
            0 => OpKind::AddElement,
            1 => OpKind::RemoveElement,
            2 => OpKind::ListElements,
            tag => return Err(DecodeError::BadTag { what: "operation", tag }),
        };
        Ok(Operation {
            kind,
            element: dec.string()?,
        })
    }
}

/// A deviation applied to an `AddElement` transition by fault injection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AddFault {
    /// The insert is silently dropped.
    Skip,
    /// A different string is inserted instead of the requested one.
    Replace(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AppError {
    #[error("semantic check failed: {0}")]
    Semantic(String),
    #[error(transparent)]
    Redundancy(#[from] StateRedundancyError),
}

#[derive(Debug, Clone)]
pub struct AppState {
    elements: BTreeSet<String>,
    count: MirroredCell<u64>,
}

impl Default for AppState {
    fn default() -> Self {
        AppState {
            elements: BTreeSet::new(),
            count: MirroredCell::new(0),
        }
    }
}

impl PartialEq for AppState {
    fn eq(&self, other: &Self) -> bool {
        self.elements == other.elements
    }
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_elements<I: IntoIterator<Item = String>>(it: I) -> Self {
        let elements: BTreeSet<String> = it.into_iter().collect();
        let count = MirroredCell::new(elements.len() as u64);
        AppState { elements, count }
    }

    pub fn contains(&self, element: &str) -> bool {
        self.elements.contains(element)
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> impl Iterator<Item = &str> {
        self.elements.iter().map(String::as_str)
    }

    pub fn count(&self) -> Result<u64, StateRedundancyError> {
        self.count.read()
    }

    /// Applies `op`, optionally deviating as described by `fault`, then runs
    /// the operation's semantic check and the count consistency check.
    pub fn apply(&mut self, op: &Operation, fault: Option<&AddFault>) -> Result<(), AppError> {
        match op.kind {
            OpKind::AddElement => {
                match fault {
                    None => {
                        self.elements.insert(op.element.clone());
                    }
                    Some(AddFault::Skip) => {}
                    Some(AddFault::Replace(s)) => {
                        self.elements.insert(s.clone());
                    }
                }
                self.count.write(self.elements.len() as u64);
                if !self.elements.contains(&op.element) {
                    return Err(AppError::Semantic(format!(
                        "{} missing after add",
                        op.element
                    )));
                }
            }
            OpKind::RemoveElement => {
                self.elements.remove(&op.element);
                self.count.write(self.elements.len() as u64);
                if self.elements.contains(&op.element) {
                    return Err(AppError::Semantic(format!(
                        "{} present after remove",
                        op.element
                    )));
                }
            }
            OpKind::ListElements => {}
        }
        let count = self.count.read()?;
        if count != self.elements.len() as u64 {
            return Err(AppError::Semantic(format!(
                "count {count} but {} elements",
                self.elements.len()
            )));
        }
        Ok(())
    }

    /// Inserts `junk` while keeping the count consistent, so no local check
    /// can notice. Models memory corruption that only distributed
    /// validation can catch.
    pub fn corrupt_silently(&mut self, junk: String) {
        self.elements.insert(junk);
        self.count.write(self.elements.len() as u64);
    }

    /// Corrupts the shadow of the element count.
    pub fn corrupt_count_shadow(&mut self, v: u64) {
        self.count.corrupt_shadow(v);
    }

    /// Canonical digest input: decimal element count and a newline, then
    /// every element in ascending byte order, each followed by a newline.
    pub fn state_digest(&self) -> Vec<u8> {
        let mut out = format!("{}\n", self.elements.len()).into_bytes();
        for e in &self.elements {
            out.extend_from_slice(e.as_bytes());
            out.push(b'\n');
        }
        out
    }

    /// `hash64(state_digest())` without materialising the digest.
    pub fn digest_hash(&self) -> u64 {
        let mut h = Fnv64::new();
        h.write(format!("{}\n", self.elements.len()).as_bytes());
        for e in &self.elements {
            h.write(e.as_bytes());
            h.write(b"\n");
        }
        h.finish()
    }

    /// Sorted element listing, one per line.
    pub fn final_state_report(&self) -> String {
        let mut out = String::new();
        for e in &self.elements {
            out.push_str(e);
            out.push('\n');
        }
        out
    }
}

impl Canonical for AppState {
    fn encode(&self, enc: &mut Encoder) {
        enc.count(self.elements.len());
        for e in &self.elements {
            enc.str(e);
        }
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let n = dec.count()?;
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(dec.string()?);
        }
        Ok(AppState::from_elements(v))
    }
}
