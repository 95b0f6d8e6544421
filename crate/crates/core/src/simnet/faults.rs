use serde::{Deserialize, Serialize};

use crate::crypto::SigningKey;
use crate::replica::{Action, ReplicaConfig};
use crate::types::{
    Block, FbProposal, FbVote, Message, Proposal, ReplicaId, Statement, Tick, TxnBatch, Vote,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "fault", rename_all = "snake_case")]
pub enum Fault {
    #[default]
    Honest,
    /// Silent from `at` on.
    Crash { at: Tick },
    /// Honest, except it never proposes regular or fallback blocks.
    MuteLeader,
    /// Sends conflicting blocks to two halves of the committee and votes for both.
    Equivocate,
}

impl Fault {
    pub fn is_honest(&self) -> bool {
        matches!(self, Fault::Honest)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Fault::Honest => "honest",
            Fault::Crash { .. } => "crash",
            Fault::MuteLeader => "mute",
            Fault::Equivocate => "equivocate",
        }
    }
}

pub struct FaultCtx<'a> {
    pub now: Tick,
    pub me: ReplicaId,
    pub config: &'a ReplicaConfig,
    pub key: &'a SigningKey,
}

/// Rewrites a faulty replica's outputs before they reach the network. The
/// replica's own state machine keeps running underneath.
pub trait ByzantineBehavior: Send {
    fn outgoing(&mut self, ctx: &FaultCtx<'_>, actions: Vec<Action>) -> Vec<Action>;

    /// Whether the replica still processes events at `now`.
    fn alive(&self, _now: Tick) -> bool {
        true
    }
}

pub struct Crash {
    pub at: Tick,
}

impl ByzantineBehavior for Crash {
    fn outgoing(&mut self, ctx: &FaultCtx<'_>, actions: Vec<Action>) -> Vec<Action> {
        if ctx.now >= self.at {
            Vec::new()
        } else {
            actions
        }
    }

    fn alive(&self, now: Tick) -> bool {
        now < self.at
    }
}

pub struct MuteLeader;

impl ByzantineBehavior for MuteLeader {
    fn outgoing(&mut self, _ctx: &FaultCtx<'_>, actions: Vec<Action>) -> Vec<Action> {
        actions
            .into_iter()
            .filter(|a| {
                !matches!(
                    a,
                    Action::Multicast { msg: Message::Proposal(_) | Message::FbProposal(_) }
                )
            })
            .collect()
    }
}

pub struct Equivocate;

fn twin(block: &Block) -> Block {
    let payload = TxnBatch { id: block.payload.id ^ (1 << 63), size: block.payload.size };
    Block::new(block.parent.clone(), block.round, block.view, payload, block.fallback)
}

impl ByzantineBehavior for Equivocate {
    fn outgoing(&mut self, ctx: &FaultCtx<'_>, actions: Vec<Action>) -> Vec<Action> {
        let n = ctx.config.n as u32;
        let first_half = |to: u32| to < n / 2 + n % 2;
        let mut out = Vec::with_capacity(actions.len());
        for a in actions {
            match a {
                Action::Multicast { msg: Message::Proposal(p) } => {
                    let b2 = twin(&p.block);
                    let st = Statement::Vote { block_id: b2.id, round: b2.round, view: b2.view };
                    let share = ctx.key.sign(&st);
                    let vote = Vote { block_id: b2.id, round: b2.round, view: b2.view, share };
                    let other = Proposal { block: b2, coin: p.coin.clone() };
                    for to in 0..n {
                        let msg = if first_half(to) { Message::Proposal(p.clone()) } else { Message::Proposal(other.clone()) };
                        out.push(Action::Send { to: ReplicaId(to), msg });
                    }
                    let next = ctx.config.leader_of(p.block.round + 1);
                    out.push(Action::Send { to: next, msg: Message::Vote(vote) });
                }
                Action::Multicast { msg: Message::FbProposal(p) } => {
                    let b2 = twin(&p.block);
                    let tag = b2.fallback.expect("f-block");
                    let st = Statement::FallbackVote {
                        block_id: b2.id,
                        round: b2.round,
                        view: b2.view,
                        height: tag.height,
                        proposer: tag.proposer,
                    };
                    let share = ctx.key.sign(&st);
                    let vote = FbVote {
                        block_id: b2.id,
                        round: b2.round,
                        view: b2.view,
                        height: tag.height,
                        proposer: tag.proposer,
                        share,
                    };
                    let other = FbProposal { block: b2, ftc: p.ftc.clone() };
                    for to in 0..n {
                        let msg = if first_half(to) {
                            Message::FbProposal(p.clone())
                        } else {
                            Message::FbProposal(other.clone())
                        };
                        out.push(Action::Send { to: ReplicaId(to), msg });
                    }
                    out.push(Action::Send { to: ctx.me, msg: Message::FbVote(vote) });
                }
                other => out.push(other),
            }
        }
        out
    }
}

pub fn behavior_for(fault: Fault) -> Option<Box<dyn ByzantineBehavior>> {
    match fault {
        Fault::Honest => None,
        Fault::Crash { at } => Some(Box::new(Crash { at })),
        Fault::MuteLeader => Some(Box::new(MuteLeader)),
        Fault::Equivocate => Some(Box::new(Equivocate)),
    }
}
