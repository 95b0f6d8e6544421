use std::collections::hash_map::Entry;

use super::{Pacemaker, Reject, Replica};
use crate::types::{ChainCert, Message, Proposal, Qc, Statement, Vote};

impl Replica {
    pub(super) fn on_proposal(&mut self, from: super::ReplicaId, p: Proposal) -> Result<(), Reject> {
        let b = &p.block;
        if b.is_fallback() {
            return Err(Reject::Malformed("f-block sent as a regular proposal"));
        }
        if from != self.cfg.leader_of(b.round) {
            return Err(Reject::WrongSender);
        }
        self.check_block(b)?;
        if let Some(coin) = &p.coin {
            // optional evidence; a bad one is ignored rather than fatal
            if self.verifier.verify_coin(coin) {
                self.observe_coin(coin.clone());
            }
        }
        if !self.blocks.contains_key(&b.parent_id()) {
            return self.buffer_on(b.parent_id(), from, Message::Proposal(p));
        }
        let block = p.block;
        match self.seen_proposal.entry((block.view, block.round)) {
            Entry::Occupied(e) if *e.get() != block.id => return Err(Reject::Equivocation),
            Entry::Occupied(_) => return Ok(()),
            Entry::Vacant(e) => {
                e.insert(block.id);
            }
        }
        let parent = block.parent.clone();
        self.store_block(block.clone());
        self.lock(parent.clone());

        let fallback_ok = match self.cfg.pacemaker {
            Pacemaker::BaselineTc => block.round > self.timed_out_round,
            Pacemaker::AsyncFallback => !self.mode && block.round == parent.round() + 1,
        };
        if block.round == self.r_cur
            && block.view == self.v_cur
            && block.round > self.r_vote
            && self.rank(&parent) >= self.rank_lock
            && fallback_ok
        {
            let st = Statement::Vote { block_id: block.id, round: block.round, view: block.view };
            let share = self.key.sign(&st);
            let to = self.cfg.leader_of(block.round + 1);
            self.r_vote = block.round;
            self.send(to, Message::Vote(Vote { block_id: block.id, round: block.round, view: block.view, share }));
        }
        Ok(())
    }

    pub(super) fn on_vote(&mut self, from: super::ReplicaId, v: Vote) -> Result<(), Reject> {
        let st = Statement::Vote { block_id: v.block_id, round: v.round, view: v.view };
        self.verify_share(from, &v.share, &st)?;
        if self.cfg.leader_of(v.round + 1) != self.id {
            return Err(Reject::WrongRecipient);
        }
        if self.formed.contains(&st) {
            return Ok(());
        }
        let q = self.committee.quorum();
        let shares = self.votes.entry(st).or_default();
        shares.insert(from, v.share);
        if shares.len() < q {
            return Ok(());
        }
        let sig = self.verifier.combine(shares.values(), q).map_err(|_| Reject::InvalidShare)?;
        self.votes.remove(&st);
        self.formed.insert(st);
        let qc = Qc { block_id: v.block_id, round: v.round, view: v.view, sig };
        self.lock(ChainCert::Regular(qc));
        Ok(())
    }
}
