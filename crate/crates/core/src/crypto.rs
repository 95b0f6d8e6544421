//! Mock threshold authenticators and the common coin.
//!
//! A trusted dealer derives one secret per replica plus a group secret from
//! the run seed. A share is a keyed hash of the statement digest under the
//! signer's secret; an aggregate is a keyed hash of the digest and signer set
//! under the group secret. Only code holding the [`Verifier`] can check or
//! mint aggregates, and only a [`SigningKey`] can mint shares, so there is no
//! forging path through the public API.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{
    hex32, Aggregate, Block, Canonical, ChainCert, CoinQc, Committee, Qc, ReplicaId, Statement,
    View,
};

/// Identifier of the election PRF, recorded in run reports.
pub const PRF_ID: &str = "sha256(len-prefixed \"elect\" || seed_be64 || view_be64)[..8] as u64 mod n";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareKind {
    Vote,
    FallbackVote,
    TimeoutRound,
    TimeoutView,
    Coin,
    Countersign,
}

impl ShareKind {
    fn code(self) -> u8 {
        match self {
            ShareKind::Vote => 1,
            ShareKind::FallbackVote => 2,
            ShareKind::TimeoutRound => 3,
            ShareKind::TimeoutView => 4,
            ShareKind::Coin => 5,
            ShareKind::Countersign => 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Share {
    #[serde(with = "hex32")]
    pub digest: [u8; 32],
    pub signer: ReplicaId,
    pub kind: ShareKind,
    pub tag: u64,
}

impl Share {
    pub fn matches(&self, statement: &Statement) -> bool {
        self.kind == statement.kind() && self.digest == statement.digest()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoinSeed(pub u64);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("insufficient shares: {have} distinct signers, need {need}")]
    InsufficientShares { have: usize, need: usize },
    #[error("shares reference different messages or kinds")]
    MixedMessages,
    #[error("invalid share from {0}")]
    InvalidShare(ReplicaId),
    #[error("no shares given")]
    Empty,
}

fn keyed(secret: &[u8; 32], digest: &[u8; 32], kind: ShareKind) -> u64 {
    let h = Canonical::new("share").bytes(secret).bytes(digest).u8(kind.code()).finish();
    u64::from_be_bytes(h[..8].try_into().unwrap())
}

/// Deterministic election: uniform in `[0, n)` over views for a fixed seed.
pub fn elect_leader(view: View, seed: CoinSeed, n: usize) -> ReplicaId {
    assert!(n >= 1, "empty committee");
    let h = Canonical::new("elect").u64(seed.0).u64(view).finish();
    let x = u64::from_be_bytes(h[..8].try_into().unwrap());
    ReplicaId((x % n as u64) as u32)
}

pub struct SigningKey {
    id: ReplicaId,
    secret: [u8; 32],
}

impl SigningKey {
    pub fn id(&self) -> ReplicaId {
        self.id
    }

    pub fn sign(&self, statement: &Statement) -> Share {
        let digest = statement.digest();
        let kind = statement.kind();
        Share { digest, signer: self.id, kind, tag: keyed(&self.secret, &digest, kind) }
    }
}

impl fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SigningKey").field("id", &self.id).finish_non_exhaustive()
    }
}

pub struct Verifier {
    committee: Committee,
    members: Vec<[u8; 32]>,
    group: [u8; 32],
    coin: CoinSeed,
}

impl fmt::Debug for Verifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Verifier").field("committee", &self.committee).finish_non_exhaustive()
    }
}

pub struct Keychain {
    pub verifier: Arc<Verifier>,
    pub keys: Vec<SigningKey>,
}

/// Trusted dealer. All secrets, including the coin seed, are derived from
/// `run_seed` under separate domains.
pub fn deal(committee: Committee, run_seed: u64) -> Keychain {
    let secret = |label: &str, i: u64| Canonical::new(label).u64(run_seed).u64(i).finish();
    let members: Vec<[u8; 32]> = (0..committee.n as u64).map(|i| secret("member-key", i)).collect();
    let group = secret("group-key", 0);
    let c = secret("coin-seed", 0);
    let coin = CoinSeed(u64::from_be_bytes(c[..8].try_into().unwrap()));
    let keys = members
        .iter()
        .enumerate()
        .map(|(i, s)| SigningKey { id: ReplicaId(i as u32), secret: *s })
        .collect();
    Keychain { verifier: Arc::new(Verifier { committee, members, group, coin }), keys }
}

impl Verifier {
    pub fn committee(&self) -> Committee {
        self.committee
    }

    fn aggregate_tag(&self, digest: &[u8; 32], kind: ShareKind, signers: &BTreeSet<ReplicaId>) -> u64 {
        let mut c = Canonical::new("aggregate").bytes(&self.group).bytes(digest).u8(kind.code());
        for s in signers {
            c = c.u32(s.0);
        }
        let h = c.finish();
        u64::from_be_bytes(h[..8].try_into().unwrap())
    }

    pub fn verify_share(&self, share: &Share) -> bool {
        self.committee.contains(share.signer)
            && share.tag == keyed(&self.members[share.signer.index()], &share.digest, share.kind)
    }

    /// Combines shares over one message. Duplicate signers count once.
    pub fn combine<'a>(
        &self,
        shares: impl IntoIterator<Item = &'a Share>,
        threshold: usize,
    ) -> Result<Aggregate, CryptoError> {
        let mut it = shares.into_iter().peekable();
        let first = it.peek().copied().ok_or(CryptoError::Empty)?;
        let (digest, kind) = (first.digest, first.kind);
        let mut signers = BTreeSet::new();
        for s in it {
            if s.digest != digest || s.kind != kind {
                return Err(CryptoError::MixedMessages);
            }
            if !self.verify_share(s) {
                return Err(CryptoError::InvalidShare(s.signer));
            }
            signers.insert(s.signer);
        }
        if signers.len() < threshold {
            return Err(CryptoError::InsufficientShares { have: signers.len(), need: threshold });
        }
        let tag = self.aggregate_tag(&digest, kind, &signers);
        Ok(Aggregate { signers, tag })
    }

    pub fn verify(&self, statement: &Statement, sig: &Aggregate, threshold: usize) -> bool {
        sig.signers.len() >= threshold
            && sig.signers.iter().all(|s| self.committee.contains(*s))
            && sig.tag == self.aggregate_tag(&statement.digest(), statement.kind(), &sig.signers)
    }

    pub fn verify_chain_cert(&self, cert: &ChainCert) -> bool {
        if *cert == self.genesis_cert() {
            return true;
        }
        self.verify(&cert.statement(), cert.sig(), self.committee.quorum())
    }

    pub fn combine_coin<'a>(
        &self,
        view: View,
        shares: impl IntoIterator<Item = &'a Share>,
    ) -> Result<CoinQc, CryptoError> {
        let st = Statement::Coin(view);
        let shares: Vec<&Share> = shares.into_iter().collect();
        if shares.iter().any(|s| !s.matches(&st)) {
            return Err(CryptoError::MixedMessages);
        }
        let sig = self.combine(shares, self.committee.coin_threshold())?;
        Ok(CoinQc { view, elected: elect_leader(view, self.coin, self.committee.n), sig })
    }

    pub fn verify_coin(&self, coin: &CoinQc) -> bool {
        self.verify(&Statement::Coin(coin.view), &coin.sig, self.committee.coin_threshold())
            && coin.elected == elect_leader(coin.view, self.coin, self.committee.n)
    }

    /// QC of the genesis block, signed by every replica.
    pub fn genesis_qc(&self) -> Qc {
        let g = Block::genesis();
        let st = Statement::Vote { block_id: g.id, round: 0, view: 0 };
        let signers: BTreeSet<ReplicaId> = self.committee.members().collect();
        let tag = self.aggregate_tag(&st.digest(), st.kind(), &signers);
        Qc { block_id: g.id, round: 0, view: 0, sig: Aggregate { signers, tag } }
    }

    pub fn genesis_cert(&self) -> ChainCert {
        ChainCert::Regular(self.genesis_qc())
    }
}
