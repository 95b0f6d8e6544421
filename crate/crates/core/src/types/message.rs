use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Block, BlockId, ChainCert, CoinQc, FallbackQc, FallbackTc, ReplicaId, Round, TimeoutCert, View};
use crate::crypto::Share;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposal {
    pub block: Block,
    /// Coin-QC of the previous view, carried by the first block of a new view.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coin: Option<CoinQc>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub block_id: BlockId,
    pub round: Round,
    pub view: View,
    pub share: Share,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeoutTarget {
    Round(Round),
    View(View),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeout {
    pub target: TimeoutTarget,
    pub share: Share,
    pub qc_high: ChainCert,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FbProposal {
    pub block: Block,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ftc: Option<FallbackTc>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FbVote {
    pub block_id: BlockId,
    pub round: Round,
    pub view: View,
    pub height: u8,
    pub proposer: ReplicaId,
    pub share: Share,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FqcRelay {
    pub fqc: FallbackQc,
    /// Relayer's own signature over the f-QC (two-chain variant).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub countersign: Option<Share>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoinShareMsg {
    pub view: View,
    pub share: Share,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Proposal(Proposal),
    Vote(Vote),
    Timeout(Timeout),
    TcRelay(TimeoutCert),
    FtcRelay(FallbackTc),
    FbProposal(FbProposal),
    FbVote(FbVote),
    FqcRelay(FqcRelay),
    CoinShare(CoinShareMsg),
    CoinQcRelay(CoinQc),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Proposal,
    Vote,
    Timeout,
    TcRelay,
    FtcRelay,
    FbProposal,
    FbVote,
    FqcRelay,
    CoinShare,
    CoinQcRelay,
}

impl MessageKind {
    pub const ALL: [MessageKind; 10] = [
        MessageKind::Proposal,
        MessageKind::Vote,
        MessageKind::Timeout,
        MessageKind::TcRelay,
        MessageKind::FtcRelay,
        MessageKind::FbProposal,
        MessageKind::FbVote,
        MessageKind::FqcRelay,
        MessageKind::CoinShare,
        MessageKind::CoinQcRelay,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::Proposal => "proposal",
            MessageKind::Vote => "vote",
            MessageKind::Timeout => "timeout",
            MessageKind::TcRelay => "tc_relay",
            MessageKind::FtcRelay => "ftc_relay",
            MessageKind::FbProposal => "fb_proposal",
            MessageKind::FbVote => "fb_vote",
            MessageKind::FqcRelay => "fqc_relay",
            MessageKind::CoinShare => "coin_share",
            MessageKind::CoinQcRelay => "coin_qc_relay",
        }
    }

    /// Authenticator units per message: one per certificate or share slot.
    /// Constant per kind, so optional attachments are counted as a slot
    /// whether or not they are filled.
    pub fn auth_units(self) -> u64 {
        match self {
            // parent certificate + coin-QC slot
            MessageKind::Proposal => 2,
            MessageKind::Vote => 1,
            // share + qc_high
            MessageKind::Timeout => 2,
            MessageKind::TcRelay => 1,
            MessageKind::FtcRelay => 1,
            // parent certificate + f-TC slot
            MessageKind::FbProposal => 2,
            MessageKind::FbVote => 1,
            // f-QC + countersignature slot
            MessageKind::FqcRelay => 2,
            MessageKind::CoinShare => 1,
            MessageKind::CoinQcRelay => 1,
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MessageKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MessageKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown message kind `{s}`"))
    }
}

/// What the network adversary is allowed to see about a message.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MessageMeta {
    pub kind: MessageKind,
    pub round: Option<Round>,
    pub view: Option<View>,
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::Proposal(_) => MessageKind::Proposal,
            Message::Vote(_) => MessageKind::Vote,
            Message::Timeout(_) => MessageKind::Timeout,
            Message::TcRelay(_) => MessageKind::TcRelay,
            Message::FtcRelay(_) => MessageKind::FtcRelay,
            Message::FbProposal(_) => MessageKind::FbProposal,
            Message::FbVote(_) => MessageKind::FbVote,
            Message::FqcRelay(_) => MessageKind::FqcRelay,
            Message::CoinShare(_) => MessageKind::CoinShare,
            Message::CoinQcRelay(_) => MessageKind::CoinQcRelay,
        }
    }

    pub fn auth_units(&self) -> u64 {
        self.kind().auth_units()
    }

    pub fn meta(&self) -> MessageMeta {
        let (round, view) = match self {
            Message::Proposal(p) => (Some(p.block.round), Some(p.block.view)),
            Message::Vote(v) => (Some(v.round), Some(v.view)),
            Message::Timeout(t) => match t.target {
                TimeoutTarget::Round(r) => (Some(r), None),
                TimeoutTarget::View(v) => (None, Some(v)),
            },
            Message::TcRelay(tc) => (Some(tc.round), None),
            Message::FtcRelay(ftc) => (None, Some(ftc.view)),
            Message::FbProposal(p) => (Some(p.block.round), Some(p.block.view)),
            Message::FbVote(v) => (Some(v.round), Some(v.view)),
            Message::FqcRelay(r) => (Some(r.fqc.round), Some(r.fqc.view)),
            Message::CoinShare(c) => (None, Some(c.view)),
            Message::CoinQcRelay(c) => (None, Some(c.view)),
        };
        MessageMeta { kind: self.kind(), round, view }
    }

    /// View a fallback-path message belongs to; `None` for steady-state traffic.
    pub fn fallback_view(&self) -> Option<View> {
        match self {
            Message::Timeout(Timeout { target: TimeoutTarget::View(v), .. }) => Some(*v),
            Message::FtcRelay(ftc) => Some(ftc.view),
            Message::FbProposal(p) => Some(p.block.view),
            Message::FbVote(v) => Some(v.view),
            Message::FqcRelay(r) => Some(r.fqc.view),
            Message::CoinShare(c) => Some(c.view),
            Message::CoinQcRelay(c) => Some(c.view),
            _ => None,
        }
    }

    pub fn summary(&self) -> String {
        match self {
            Message::Proposal(p) => {
                format!("proposal v{} r{} {:?}", p.block.view, p.block.round, p.block.id)
            }
            Message::Vote(v) => format!("vote v{} r{} {:?}", v.view, v.round, v.block_id),
            Message::Timeout(t) => match t.target {
                TimeoutTarget::Round(r) => format!("timeout r{r} qc_high r{}", t.qc_high.round()),
                TimeoutTarget::View(v) => format!("timeout v{v} qc_high r{}", t.qc_high.round()),
            },
            Message::TcRelay(tc) => format!("tc r{}", tc.round),
            Message::FtcRelay(ftc) => format!("ftc v{}", ftc.view),
            Message::FbProposal(p) => format!(
                "fblock v{} r{} h{} {:?}",
                p.block.view,
                p.block.round,
                p.block.height().unwrap_or(0),
                p.block.id
            ),
            Message::FbVote(v) => {
                format!("fvote v{} r{} h{} for {}", v.view, v.round, v.height, v.proposer)
            }
            Message::FqcRelay(r) => {
                format!("fqc v{} h{} by {}", r.fqc.view, r.fqc.height, r.fqc.proposer)
            }
            Message::CoinShare(c) => format!("coin-share v{}", c.view),
            Message::CoinQcRelay(c) => format!("coin-qc v{} elects {}", c.view, c.elected),
        }
    }
}
