//! Protocol data: identifiers, ranks, blocks, certificates and wire messages.
//!
//! Everything here is an immutable value once constructed. Blocks and
//! certificates are compared by [`Rank`], a lexicographic order on
//! `(view, endorsed, round)`: a higher view always wins, and within a view an
//! endorsed fallback certificate outranks every regular QC.

mod block;
mod cert;
mod message;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

pub use block::{Block, BlockId, FallbackTag, TxnBatch};
pub use cert::{
    max_cert_by, rank_of, Aggregate, Certificate, ChainCert, CoinHistory,
    CoinQc, FallbackQc, FallbackTc, Qc, Statement, TimeoutCert,
};
pub use message::{
    CoinShareMsg, FbProposal, FbVote, FqcRelay, Message, MessageKind, MessageMeta, Proposal,
    Timeout, TimeoutTarget, Vote,
};

pub type Round = u64;
pub type View = u64;
pub type Tick = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReplicaId(pub u32);

impl ReplicaId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Total order used wherever blocks or certificates are compared.
///
/// Field order matters: the derived `Ord` is lexicographic over
/// `(view, endorsed, round)` with `false < true`.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Rank {
    pub view: View,
    pub endorsed: bool,
    pub round: Round,
}

impl Rank {
    pub const fn new(view: View, endorsed: bool, round: Round) -> Self {
        Rank { view, endorsed, round }
    }
}

impl fmt::Display for Rank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = if self.endorsed { "e" } else { "" };
        write!(f, "({},{}{})", self.view, e, self.round)
    }
}

/// Committee sizing: `n = 3f + 1` replicas tolerating `f` Byzantine ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Committee {
    pub n: usize,
    pub f: usize,
}

impl Committee {
    pub fn new(n: usize, f: usize) -> Option<Self> {
        (f >= 1 && n == 3 * f + 1).then_some(Committee { n, f })
    }

    pub fn with_faults(f: usize) -> Option<Self> {
        Self::new(3 * f + 1, f)
    }

    /// Certificate threshold for votes and timeouts, `2f + 1`.
    pub fn quorum(&self) -> usize {
        2 * self.f + 1
    }

    /// Coin-share threshold, `f + 1`.
    pub fn coin_threshold(&self) -> usize {
        self.f + 1
    }

    pub fn members(&self) -> impl Iterator<Item = ReplicaId> {
        (0..self.n as u32).map(ReplicaId)
    }

    pub fn contains(&self, id: ReplicaId) -> bool {
        id.index() < self.n
    }
}

/// Canonical, domain-separated field serialization fed into SHA-256.
///
/// Integers are written big-endian at fixed width so that the byte stream is
/// a pure function of the field values.
pub(crate) struct Canonical(Sha256);

impl Canonical {
    pub(crate) fn new(domain: &str) -> Self {
        let mut h = Sha256::new();
        h.update((domain.len() as u32).to_be_bytes());
        h.update(domain.as_bytes());
        Canonical(h)
    }

    pub(crate) fn u64(mut self, v: u64) -> Self {
        self.0.update(v.to_be_bytes());
        self
    }

    pub(crate) fn u32(mut self, v: u32) -> Self {
        self.0.update(v.to_be_bytes());
        self
    }

    pub(crate) fn u8(mut self, v: u8) -> Self {
        self.0.update([v]);
        self
    }

    pub(crate) fn bytes(mut self, b: &[u8]) -> Self {
        self.0.update(b);
        self
    }

    pub(crate) fn finish(self) -> [u8; 32] {
        self.0.finalize().into()
    }
}

pub(crate) mod hex32 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let mut out = [0u8; 32];
        hex::decode_to_slice(&s, &mut out).map_err(serde::de::Error::custom)?;
        Ok(out)
    }
}
