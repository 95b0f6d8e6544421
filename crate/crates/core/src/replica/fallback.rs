//! Asynchronous fallback: Enter Fallback through Exit Fallback.

use std::collections::hash_map::Entry;

use super::{Note, Reject, Replica, Variant};
use crate::types::{
    Block, ChainCert, CoinQc, CoinShareMsg, FallbackQc, FallbackTag, FallbackTc, FbProposal,
    FbVote, FqcRelay, Message, ReplicaId, Statement,
};

impl Replica {
    pub(super) fn on_ftc_relay(&mut self, ftc: FallbackTc) -> Result<(), Reject> {
        self.verify_ftc(&ftc)?;
        if ftc.view < self.v_cur {
            return Err(Reject::StaleView);
        }
        self.enter_fallback(ftc);
        Ok(())
    }

    fn verify_ftc(&self, ftc: &FallbackTc) -> Result<(), Reject> {
        let ok = self.verifier.verify(&Statement::TimeoutView(ftc.view), &ftc.sig, self.committee.quorum());
        ok.then_some(()).ok_or(Reject::InvalidCertificate)
    }

    /// Idempotent per view.
    pub(super) fn enter_fallback(&mut self, ftc: FallbackTc) {
        if ftc.view < self.v_cur || self.entered_view == Some(ftc.view) {
            return;
        }
        self.v_cur = ftc.view;
        self.set_mode(true);
        self.fvoted_round.iter_mut().for_each(|r| *r = 0);
        self.fvoted_height.iter_mut().for_each(|h| *h = 0);
        self.entered_view = Some(ftc.view);
        self.relayed = false;
        self.note(Note::EnterFallback { view: ftc.view });
        self.multicast(Message::FtcRelay(ftc.clone()));

        let parent = self.qc_high.clone();
        let round = parent.round() + 1;
        self.propose_fblock(parent, round, 1, Some(ftc));
        self.release_future();
        self.maybe_coin_share();
    }

    fn propose_fblock(&mut self, parent: ChainCert, round: u64, height: u8, ftc: Option<FallbackTc>) {
        let payload = self.payload();
        let tag = FallbackTag { height, proposer: self.id };
        let block = Block::new(parent, round, self.v_cur, payload, Some(tag));
        self.fproposed_height = height;
        self.multicast(Message::FbProposal(FbProposal { block, ftc }));
    }

    pub(super) fn on_fb_proposal(&mut self, from: ReplicaId, p: FbProposal) -> Result<(), Reject> {
        let b = &p.block;
        let tag = b.fallback.ok_or(Reject::Malformed("regular block sent as an f-block"))?;
        if tag.proposer != from {
            return Err(Reject::WrongSender);
        }
        self.check_block(b)?;
        if tag.height > 1 && b.parent.as_fallback().is_none() {
            return Err(Reject::Malformed("f-block above height 1 needs an f-QC parent"));
        }
        if let Some(ftc) = &p.ftc {
            self.verify_ftc(ftc)?;
            if ftc.view >= self.v_cur {
                self.enter_fallback(ftc.clone());
            }
        }
        if !self.blocks.contains_key(&b.parent_id()) {
            return self.buffer_on(b.parent_id(), from, Message::FbProposal(p));
        }
        if b.view > self.v_cur {
            return self.buffer_future(b.view, from, Message::FbProposal(p));
        }
        let FbProposal { block, ftc } = p;
        match self.seen_fblock.entry((block.view, from, tag.height)) {
            Entry::Occupied(e) if *e.get() != block.id => return Err(Reject::Equivocation),
            Entry::Occupied(_) => return Ok(()),
            Entry::Vacant(e) => {
                e.insert(block.id);
            }
        }
        let parent = block.parent.clone();
        self.store_block(block.clone());
        if let ChainCert::Fallback(q) = &parent {
            self.observe_fqc(q.clone());
        }
        self.lock(parent.clone());

        let j = from.index();
        if !self.mode || block.view != self.v_cur || tag.height <= self.fvoted_height[j] {
            return Ok(());
        }
        let ok = if tag.height == 1 {
            ftc.is_some_and(|f| f.view == self.v_cur)
                && self.lockable(&parent)
                && self.rank(&parent) >= self.rank_lock
                && block.round == parent.round() + 1
        } else {
            let q = parent.as_fallback().expect("checked above");
            q.view == self.v_cur
                && block.round == q.round + 1
                && block.round > self.fvoted_round[j]
                && tag.height == q.height + 1
                && (self.cfg.adopts() || q.proposer == from)
        };
        if ok {
            self.fvoted_round[j] = block.round;
            self.fvoted_height[j] = tag.height;
            let st = Statement::FallbackVote {
                block_id: block.id,
                round: block.round,
                view: block.view,
                height: tag.height,
                proposer: from,
            };
            let share = self.key.sign(&st);
            self.send(
                from,
                Message::FbVote(FbVote {
                    block_id: block.id,
                    round: block.round,
                    view: block.view,
                    height: tag.height,
                    proposer: from,
                    share,
                }),
            );
        }
        Ok(())
    }

    pub(super) fn on_fb_vote(&mut self, from: ReplicaId, v: FbVote) -> Result<(), Reject> {
        let st = Statement::FallbackVote {
            block_id: v.block_id,
            round: v.round,
            view: v.view,
            height: v.height,
            proposer: v.proposer,
        };
        self.verify_share(from, &v.share, &st)?;
        if v.proposer != self.id {
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
        self.observe_fqc(FallbackQc {
            block_id: v.block_id,
            round: v.round,
            view: v.view,
            height: v.height,
            proposer: v.proposer,
            sig,
        });
        Ok(())
    }

    /// Any newly learned f-QC: formed locally, seen as a parent, or relayed.
    pub(super) fn observe_fqc(&mut self, fqc: FallbackQc) {
        let cert = ChainCert::Fallback(fqc.clone());
        self.record_cert(&cert);
        if self.lockable(&cert) {
            self.lock(cert);
        }
        if self.mode && fqc.view == self.v_cur && self.entered_view == Some(self.v_cur) {
            self.fallback_propose(fqc);
        }
    }

    fn fallback_propose(&mut self, fqc: FallbackQc) {
        let h = fqc.height;
        let top = self.cfg.variant.chain_len();
        let own = fqc.proposer == self.id;
        match self.cfg.variant {
            Variant::ThreeChain => {
                if h < top && self.fproposed_height == h && (own || self.cfg.adopts()) {
                    let round = fqc.round + 1;
                    self.propose_fblock(ChainCert::Fallback(fqc), round, h + 1, None);
                } else if h == top && own && !self.relayed {
                    self.relayed = true;
                    self.multicast(Message::FqcRelay(FqcRelay { fqc, countersign: None }));
                }
            }
            Variant::TwoChain => {
                if h == 1 && self.fproposed_height == 1 {
                    let round = fqc.round + 1;
                    self.propose_fblock(ChainCert::Fallback(fqc), round, 2, None);
                } else if h == top && !self.relayed {
                    self.relayed = true;
                    let cs = self.key.sign(&Statement::Countersign(fqc.statement().digest()));
                    self.multicast(Message::FqcRelay(FqcRelay { fqc, countersign: Some(cs) }));
                }
            }
        }
    }

    pub(super) fn on_fqc_relay(&mut self, from: ReplicaId, r: FqcRelay) -> Result<(), Reject> {
        let fqc = &r.fqc;
        if fqc.height != self.cfg.variant.chain_len() {
            return Err(Reject::WrongHeight);
        }
        if !self.verifier.verify(&fqc.statement(), &fqc.sig, self.committee.quorum()) {
            return Err(Reject::InvalidCertificate);
        }
        let completer = match self.cfg.variant {
            Variant::ThreeChain => fqc.proposer,
            Variant::TwoChain => {
                let cs = r.countersign.as_ref().ok_or(Reject::Malformed("missing countersignature"))?;
                self.verify_share(from, cs, &Statement::Countersign(fqc.statement().digest()))?;
                cs.signer
            }
        };
        if fqc.view > self.v_cur {
            let view = fqc.view;
            return self.buffer_future(view, from, Message::FqcRelay(r));
        }
        let view = fqc.view;
        self.observe_fqc(r.fqc);
        if view < self.v_cur {
            return Ok(());
        }
        self.relays.entry(view).or_default().insert(completer);
        self.maybe_coin_share();
        Ok(())
    }

    fn maybe_coin_share(&mut self) {
        let v = self.v_cur;
        let enough = self.relays.get(&v).is_some_and(|s| s.len() >= self.committee.quorum());
        if self.mode && enough && self.coin_sent_view != Some(v) {
            self.coin_sent_view = Some(v);
            let share = self.key.sign(&Statement::Coin(v));
            self.multicast(Message::CoinShare(CoinShareMsg { view: v, share }));
        }
    }

    pub(super) fn on_coin_share(&mut self, from: ReplicaId, c: CoinShareMsg) -> Result<(), Reject> {
        self.verify_share(from, &c.share, &Statement::Coin(c.view))?;
        if c.view < self.v_cur {
            return Err(Reject::StaleView);
        }
        if c.view > self.v_cur {
            return self.buffer_future(c.view, from, Message::CoinShare(c));
        }
        let shares = self.coin_shares.entry(c.view).or_default();
        shares.insert(from, c.share);
        if shares.len() < self.committee.coin_threshold() {
            return Ok(());
        }
        let coin = self.verifier.combine_coin(c.view, shares.values()).map_err(|_| Reject::InvalidShare)?;
        self.coin_shares.remove(&c.view);
        self.observe_coin(coin);
        Ok(())
    }

    pub(super) fn on_coin_qc(&mut self, from: ReplicaId, coin: CoinQc) -> Result<(), Reject> {
        if !self.verifier.verify_coin(&coin) {
            return Err(Reject::InvalidCertificate);
        }
        if coin.view > self.v_cur {
            return self.buffer_future(coin.view, from, Message::CoinQcRelay(coin));
        }
        self.observe_coin(coin);
        Ok(())
    }

    /// A verified coin-QC. Exits the fallback when it closes the current
    /// view; coins of older views only feed endorsement.
    pub(super) fn observe_coin(&mut self, coin: CoinQc) {
        if coin.view > self.v_cur {
            let me = self.id;
            let _ = self.buffer_future(coin.view, me, Message::CoinQcRelay(coin));
            return;
        }
        let view = coin.view;
        if !self.coins.insert(coin.clone()) {
            return;
        }
        if view < self.v_cur {
            self.endorse(view);
            return;
        }
        self.multicast(Message::CoinQcRelay(coin.clone()));
        let leader = coin.elected;
        if self.mode {
            self.r_vote = self.fvoted_round[leader.index()];
        }
        self.set_mode(false);
        self.v_cur += 1;
        self.note(Note::ExitFallback { view, leader });
        self.endorse(view);
        let best = self
            .fcerts_by_view
            .get(&view)
            .into_iter()
            .flatten()
            .filter(|id| self.endorsed.contains(*id))
            .filter_map(|id| self.certs.get(id))
            .max_by_key(|c| c.round())
            .cloned();
        let before = self.r_cur;
        if let Some(cert) = best {
            self.lock(cert);
        }
        if self.r_cur == before {
            self.enter_round();
        }
        self.release_future();
    }
}
