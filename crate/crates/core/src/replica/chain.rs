//! Block store, endorsement, Lock, Advance Round and Commit.

use super::{Action, Note, Pacemaker, Replica, Variant};
use crate::types::{Block, BlockId, ChainCert, FallbackQc, Message, Proposal, rank_of, Rank, ReplicaId, Round, View};

/// Whether `q` is the top of the f-chain a coin electing `leader` endorses.
pub fn is_endorsement_root(q: &FallbackQc, leader: ReplicaId, chain_len: u8) -> bool {
    q.proposer == leader && q.height == chain_len
}

impl Replica {
    /// Rank under this replica's current knowledge of coins.
    pub(super) fn rank(&self, cert: &ChainCert) -> Rank {
        rank_of(cert, self.endorsed.contains(&cert.block_id()))
    }

    /// A QC, or an f-QC that is (or may turn out to be once its block is
    /// known) endorsed.
    fn may_lock(&self, cert: &ChainCert) -> bool {
        match cert {
            ChainCert::Regular(_) => true,
            ChainCert::Fallback(q) => {
                self.endorsed.contains(&q.block_id)
                    || (self.coins.get(q.view).is_some() && !self.blocks.contains_key(&q.block_id))
            }
        }
    }

    pub(super) fn lockable(&self, cert: &ChainCert) -> bool {
        match cert {
            ChainCert::Regular(_) => true,
            ChainCert::Fallback(q) => self.endorsed.contains(&q.block_id),
        }
    }

    pub(super) fn store_block(&mut self, b: Block) {
        if self.blocks.contains_key(&b.id) {
            return;
        }
        let (id, view, fallback) = (b.id, b.view, b.is_fallback());
        self.blocks.insert(id, b);
        if fallback && self.coins.get(view).is_some() {
            self.endorse(view);
        }
        if let Some(items) = self.waiting.remove(&id) {
            self.release(items);
        }
        if let Some(certs) = self.pending_locks.remove(&id) {
            for c in certs {
                self.lock(c);
            }
        }
    }

    /// Remembers a certificate. F-QCs of a view with a known coin may extend
    /// the endorsed set.
    pub(super) fn record_cert(&mut self, cert: &ChainCert) {
        let id = cert.block_id();
        if self.certs.contains_key(&id) {
            return;
        }
        self.certs.insert(id, cert.clone());
        if let ChainCert::Fallback(q) = cert {
            self.fcerts_by_view.entry(q.view).or_default().push(id);
            if self.coins.get(q.view).is_some() {
                self.endorse(q.view);
            }
        }
    }

    /// Recomputes endorsement for `view` and locks on every newly endorsed
    /// f-QC, lowest round first.
    ///
    /// Endorsed: the elected leader's complete f-chain, i.e. its certified
    /// top-height f-block and that block's same-view f-block ancestors.
    pub(super) fn endorse(&mut self, view: View) {
        let Some(leader) = self.coins.elected(view) else { return };
        let top = self.cfg.variant.chain_len();
        let roots: Vec<BlockId> = self
            .fcerts_by_view
            .get(&view)
            .into_iter()
            .flatten()
            .filter(|id| matches!(self.certs.get(id), Some(ChainCert::Fallback(q)) if is_endorsement_root(q, leader, top)))
            .copied()
            .collect();
        let mut fresh = Vec::new();
        for root in roots {
            let mut cur = root;
            loop {
                if self.endorsed.insert(cur) {
                    fresh.push(cur);
                }
                let Some(b) = self.blocks.get(&cur) else { break };
                match &b.parent {
                    ChainCert::Fallback(p) if p.view == view => cur = p.block_id,
                    _ => break,
                }
            }
        }
        let mut certs: Vec<ChainCert> =
            fresh.iter().filter_map(|id| self.certs.get(id).cloned()).collect();
        certs.sort_by_key(|c| c.round());
        for c in certs {
            self.lock(c);
        }
    }

    /// Lock rule. Runs only on QCs and endorsed f-QCs, and only once the
    /// certified block is known.
    pub(super) fn lock(&mut self, cert: ChainCert) {
        if !self.may_lock(&cert) {
            return;
        }
        let id = cert.block_id();
        let Some(block) = self.blocks.get(&id) else {
            let waiting = self.pending_locks.entry(id).or_default();
            if !waiting.contains(&cert) {
                waiting.push(cert);
            }
            return;
        };
        let parent = block.parent.clone();
        let genesis = block.is_genesis();
        self.record_cert(&cert);
        if !self.lockable(&cert) {
            return;
        }
        let lock_rank = match self.cfg.variant {
            Variant::ThreeChain if genesis => Rank::default(),
            Variant::ThreeChain => self.rank(&parent),
            Variant::TwoChain => self.rank(&cert),
        };
        self.rank_lock = self.rank_lock.max(lock_rank);
        if self.rank(&cert) > self.rank(&self.qc_high) {
            self.qc_high = cert.clone();
        }
        self.advance_round(cert.round() + 1);
        self.try_commit(id);
    }

    pub(super) fn advance_round(&mut self, round: Round) {
        if round <= self.r_cur {
            return;
        }
        self.r_cur = round;
        self.enter_round();
    }

    pub(super) fn enter_round(&mut self) {
        self.out.push(Action::CancelTimers);
        self.out.push(Action::SetTimer { round: self.r_cur, duration: self.cfg.timeout_duration });
        self.maybe_propose();
    }

    pub(super) fn maybe_propose(&mut self) {
        if self.cfg.leader_of(self.r_cur) != self.id {
            return;
        }
        if self.cfg.pacemaker == Pacemaker::AsyncFallback && self.mode {
            return;
        }
        if !self.proposed.insert((self.v_cur, self.r_cur)) {
            return;
        }
        let coin = self.qc_high.as_fallback().and_then(|q| self.coins.get(q.view).cloned());
        let payload = self.payload();
        let block = Block::new(self.qc_high.clone(), self.r_cur, self.v_cur, payload, None);
        self.multicast(Message::Proposal(Proposal { block, coin }));
    }

    /// Commit rule: `chain_len` adjacent certified-or-endorsed blocks with
    /// consecutive rounds and one view, ending at the block certified by the
    /// certificate just locked on.
    fn try_commit(&mut self, head: BlockId) {
        let k = self.cfg.variant.chain_len() as usize;
        let mut chain: Vec<&Block> = Vec::with_capacity(k);
        let mut cur = head;
        for _ in 0..k {
            let Some(b) = self.blocks.get(&cur) else { return };
            if b.is_genesis() || (b.is_fallback() && !self.endorsed.contains(&b.id)) {
                return;
            }
            chain.push(b);
            cur = b.parent_id();
        }
        let adjacent = chain
            .windows(2)
            .all(|w| w[0].round == w[1].round + 1 && w[0].view == w[1].view && w[0].parent_id() == w[1].id);
        if adjacent {
            let target = chain[k - 1].id;
            self.commit(target);
        }
    }

    fn commit(&mut self, target: BlockId) {
        if self.committed_set.contains(&target) {
            return;
        }
        let mut path = Vec::new();
        let mut cur = target;
        let stop = loop {
            let b = &self.blocks[&cur];
            if self.committed_set.contains(&cur) || b.is_genesis() {
                break cur;
            }
            path.push(cur);
            cur = b.parent_id();
        };
        let tip = self.committed.last().copied().unwrap_or_else(|| Block::genesis().id);
        if stop != tip {
            let detail = format!("{target:?} does not extend committed tip {tip:?}");
            log::error!("{}: {detail}", self.id);
            self.note(Note::Conflict { detail });
            return;
        }
        path.reverse();
        for id in &path {
            self.committed_set.insert(*id);
        }
        self.committed.extend_from_slice(&path);
        self.out.push(Action::Commit { blocks: path });
    }
}
