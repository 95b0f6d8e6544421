use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{BlockId, Canonical, Rank, ReplicaId, Round, View};
use crate::crypto::ShareKind;

/// A message that replicas sign shares over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Statement {
    Vote { block_id: BlockId, round: Round, view: View },
    FallbackVote { block_id: BlockId, round: Round, view: View, height: u8, proposer: ReplicaId },
    TimeoutRound(Round),
    TimeoutView(View),
    Coin(View),
    /// Individual signature over an f-QC, used when relaying height-2 f-QCs.
    Countersign([u8; 32]),
}

impl Statement {
    pub fn kind(&self) -> ShareKind {
        match self {
            Statement::Vote { .. } => ShareKind::Vote,
            Statement::FallbackVote { .. } => ShareKind::FallbackVote,
            Statement::TimeoutRound(_) => ShareKind::TimeoutRound,
            Statement::TimeoutView(_) => ShareKind::TimeoutView,
            Statement::Coin(_) => ShareKind::Coin,
            Statement::Countersign(_) => ShareKind::Countersign,
        }
    }

    pub fn digest(&self) -> [u8; 32] {
        match *self {
            Statement::Vote { block_id, round, view } => {
                Canonical::new("vote").bytes(&block_id.0).u64(round).u64(view).finish()
            }
            Statement::FallbackVote { block_id, round, view, height, proposer } => {
                Canonical::new("fvote")
                    .bytes(&block_id.0)
                    .u64(round)
                    .u64(view)
                    .u8(height)
                    .u32(proposer.0)
                    .finish()
            }
            Statement::TimeoutRound(r) => Canonical::new("timeout-round").u64(r).finish(),
            Statement::TimeoutView(v) => Canonical::new("timeout-view").u64(v).finish(),
            Statement::Coin(v) => Canonical::new("coin").u64(v).finish(),
            Statement::Countersign(d) => Canonical::new("countersign").bytes(&d).finish(),
        }
    }
}

/// Combined threshold signature: the signer set plus a mock tag binding it to
/// the signed statement.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Aggregate {
    pub signers: BTreeSet<ReplicaId>,
    pub tag: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Qc {
    pub block_id: BlockId,
    pub round: Round,
    pub view: View,
    pub sig: Aggregate,
}

impl Qc {
    pub fn statement(&self) -> Statement {
        Statement::Vote { block_id: self.block_id, round: self.round, view: self.view }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FallbackQc {
    pub block_id: BlockId,
    pub round: Round,
    pub view: View,
    pub height: u8,
    pub proposer: ReplicaId,
    pub sig: Aggregate,
}

impl FallbackQc {
    pub fn statement(&self) -> Statement {
        Statement::FallbackVote {
            block_id: self.block_id,
            round: self.round,
            view: self.view,
            height: self.height,
            proposer: self.proposer,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeoutCert {
    pub round: Round,
    pub sig: Aggregate,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FallbackTc {
    pub view: View,
    pub sig: Aggregate,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoinQc {
    pub view: View,
    pub elected: ReplicaId,
    pub sig: Aggregate,
}

/// Any quorum-attested record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Certificate {
    Qc(Qc),
    FallbackQc(FallbackQc),
    Timeout(TimeoutCert),
    FallbackTimeout(FallbackTc),
    Coin(CoinQc),
}

impl Certificate {
    pub fn signers(&self) -> &BTreeSet<ReplicaId> {
        match self {
            Certificate::Qc(c) => &c.sig.signers,
            Certificate::FallbackQc(c) => &c.sig.signers,
            Certificate::Timeout(c) => &c.sig.signers,
            Certificate::FallbackTimeout(c) => &c.sig.signers,
            Certificate::Coin(c) => &c.sig.signers,
        }
    }
}

/// A certificate that can sit on a chain: a regular QC or a fallback QC.
/// Blocks point at their parent through one of these.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ChainCert {
    Regular(Qc),
    Fallback(FallbackQc),
}

impl ChainCert {
    pub fn block_id(&self) -> BlockId {
        match self {
            ChainCert::Regular(q) => q.block_id,
            ChainCert::Fallback(q) => q.block_id,
        }
    }

    pub fn round(&self) -> Round {
        match self {
            ChainCert::Regular(q) => q.round,
            ChainCert::Fallback(q) => q.round,
        }
    }

    pub fn view(&self) -> View {
        match self {
            ChainCert::Regular(q) => q.view,
            ChainCert::Fallback(q) => q.view,
        }
    }

    pub fn sig(&self) -> &Aggregate {
        match self {
            ChainCert::Regular(q) => &q.sig,
            ChainCert::Fallback(q) => &q.sig,
        }
    }

    pub fn statement(&self) -> Statement {
        match self {
            ChainCert::Regular(q) => q.statement(),
            ChainCert::Fallback(q) => q.statement(),
        }
    }

    /// Digest of the signed statement; this is what a child block commits to.
    pub fn digest(&self) -> [u8; 32] {
        self.statement().digest()
    }

    pub fn as_fallback(&self) -> Option<&FallbackQc> {
        match self {
            ChainCert::Fallback(q) => Some(q),
            ChainCert::Regular(_) => None,
        }
    }

    pub fn into_certificate(self) -> Certificate {
        match self {
            ChainCert::Regular(q) => Certificate::Qc(q),
            ChainCert::Fallback(q) => Certificate::FallbackQc(q),
        }
    }
}

/// Coin-QCs known so far, one per closed view.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoinHistory {
    by_view: BTreeMap<View, CoinQc>,
}

impl CoinHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false if a coin for that view was already recorded.
    pub fn insert(&mut self, coin: CoinQc) -> bool {
        if self.by_view.contains_key(&coin.view) {
            return false;
        }
        self.by_view.insert(coin.view, coin);
        true
    }

    pub fn get(&self, view: View) -> Option<&CoinQc> {
        self.by_view.get(&view)
    }

    pub fn elected(&self, view: View) -> Option<ReplicaId> {
        self.by_view.get(&view).map(|c| c.elected)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CoinQc> {
        self.by_view.values()
    }

    pub fn len(&self) -> usize {
        self.by_view.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_view.is_empty()
    }
}

/// Rank of a chain certificate. `endorsed` only matters for f-QCs.
pub fn rank_of(cert: &ChainCert, endorsed: bool) -> Rank {
    match cert {
        ChainCert::Regular(q) => Rank::new(q.view, false, q.round),
        ChainCert::Fallback(q) => Rank::new(q.view, endorsed, q.round),
    }
}

/// Higher-ranked of two certificates; ties keep the first argument.
pub fn max_cert_by<'a>(
    a: &'a ChainCert,
    b: &'a ChainCert,
    rank: impl Fn(&ChainCert) -> Rank,
) -> &'a ChainCert {
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qc(view: View, round: Round, id: u8) -> ChainCert {
        ChainCert::Regular(Qc { block_id: BlockId([id; 32]), round, view, sig: Aggregate::default() })
    }

    fn fqc(view: View, round: Round, proposer: u32) -> ChainCert {
        ChainCert::Fallback(FallbackQc {
            block_id: BlockId([round as u8; 32]),
            round,
            view,
            height: 3,
            proposer: ReplicaId(proposer),
            sig: Aggregate::default(),
        })
    }

    fn coin(view: View, elected: u32) -> CoinQc {
        CoinQc { view, elected: ReplicaId(elected), sig: Aggregate::default() }
    }

    #[test]
    fn higher_view_wins() {
        assert!(rank_of(&qc(1, 1, 0), false) > rank_of(&qc(0, 99, 0), false));
        assert_eq!(rank_of(&qc(0, 5, 0), true), rank_of(&qc(0, 5, 1), false));
    }

    #[test]
    fn endorsed_fqc_beats_same_view_qc() {
        let f = fqc(1, 3, 2);
        assert_eq!(rank_of(&f, false), Rank::new(1, false, 3));
        assert!(rank_of(&f, true) > rank_of(&qc(1, 10, 0), false));
        assert!(rank_of(&f, false) < rank_of(&qc(1, 10, 0), false));
    }

    #[test]
    fn max_cert_cases() {
        let r = |c: &ChainCert| rank_of(c, false);
        let (a, b) = (qc(0, 2, 0), qc(0, 7, 0));
        assert_eq!(max_cert_by(&a, &b, r), &b);
        let (a, b) = (qc(1, 1, 0), qc(0, 9, 0));
        assert_eq!(max_cert_by(&a, &b, r), &a);
        let (a, b) = (qc(0, 4, 1), qc(0, 4, 2));
        assert_eq!(max_cert_by(&a, &b, r), &a);
        assert_eq!(max_cert_by(&b, &a, r), &b);
    }

    #[test]
    fn coin_history_keeps_first() {
        let mut h = CoinHistory::new();
        assert!(h.insert(coin(0, 1)));
        assert!(!h.insert(coin(0, 2)));
        assert_eq!(h.elected(0), Some(ReplicaId(1)));
    }
}
