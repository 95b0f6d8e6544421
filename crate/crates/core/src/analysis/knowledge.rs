use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use super::AnalysisError;
use crate::crypto::{deal, Verifier};
use crate::replica::is_endorsement_root;
use crate::simnet::{Record, Trace};
use crate::types::{Block, BlockId, ChainCert, CoinHistory, CoinQc, Message, View};

/// Everything an omniscient observer learns from the wire.
pub(crate) struct Knowledge {
    pub blocks: HashMap<BlockId, Block>,
    /// Verified certificates, keyed by certified block.
    pub certs: HashMap<BlockId, ChainCert>,
    pub coins: CoinHistory,
    pub endorsed: HashSet<BlockId>,
    /// Tick at which each block was first sent.
    pub proposed_at: HashMap<BlockId, u64>,
}

impl Knowledge {
    pub fn from_trace(trace: &Trace) -> Result<Self, AnalysisError> {
        let committee = trace
            .config()
            .replica
            .validate()
            .map_err(|e| AnalysisError::MalformedTrace(format!("config: {e}")))?;
        let kc = deal(committee, trace.config().seed());
        let mut k = Knowledge {
            blocks: HashMap::new(),
            certs: HashMap::new(),
            coins: CoinHistory::new(),
            endorsed: HashSet::new(),
            proposed_at: HashMap::new(),
        };
        let g = Block::genesis();
        k.certs.insert(g.id, kc.verifier.genesis_cert());
        k.blocks.insert(g.id, g);

        let mut last_tick = 0;
        for r in &trace.records {
            if r.tick() < last_tick {
                return Err(AnalysisError::MalformedTrace(format!("tick {} after {last_tick}", r.tick())));
            }
            last_tick = r.tick();
            if let Record::Deliver { sent, msg, .. } = r {
                k.absorb(&kc.verifier, *sent, msg)?;
            }
        }
        if trace.footer.records != trace.records.len() {
            return Err(AnalysisError::MalformedTrace(format!(
                "footer counts {} records, found {}",
                trace.footer.records,
                trace.records.len()
            )));
        }
        k.endorse_all(trace.config().replica.variant.chain_len());
        Ok(k)
    }

    fn absorb(&mut self, v: &Verifier, sent: u64, msg: &Message) -> Result<(), AnalysisError> {
        let mut cert = |c: &ChainCert| {
            if !self.certs.contains_key(&c.block_id()) && v.verify_chain_cert(c) {
                self.certs.insert(c.block_id(), c.clone());
            }
        };
        match msg {
            Message::Proposal(p) => {
                cert(&p.block.parent);
                if let Some(c) = &p.coin {
                    self.coin(v, c);
                }
                self.block(sent, &p.block)?;
            }
            Message::FbProposal(p) => {
                cert(&p.block.parent);
                self.block(sent, &p.block)?;
            }
            Message::Timeout(t) => cert(&t.qc_high),
            Message::FqcRelay(r) => cert(&ChainCert::Fallback(r.fqc.clone())),
            Message::CoinQcRelay(c) => self.coin(v, c),
            _ => {}
        }
        Ok(())
    }

    fn coin(&mut self, v: &Verifier, c: &CoinQc) {
        if v.verify_coin(c) {
            self.coins.insert(c.clone());
        }
    }

    fn block(&mut self, sent: u64, b: &Block) -> Result<(), AnalysisError> {
        if !b.verify_id() {
            return Err(AnalysisError::MalformedTrace(format!("block {:?} has a wrong id", b.id)));
        }
        self.proposed_at.entry(b.id).or_insert(sent);
        self.blocks.entry(b.id).or_insert_with(|| b.clone());
        Ok(())
    }

    /// Same rule as the replicas: the elected leader's certified top-height
    /// f-block and its same-view f-block ancestors.
    fn endorse_all(&mut self, chain_len: u8) {
        for (id, c) in &self.certs {
            let ChainCert::Fallback(q) = c else { continue };
            let Some(leader) = self.coins.elected(q.view) else { continue };
            if !is_endorsement_root(q, leader, chain_len) {
                continue;
            }
            let mut cur = *id;
            loop {
                self.endorsed.insert(cur);
                let Some(b) = self.blocks.get(&cur) else { break };
                match &b.parent {
                    ChainCert::Fallback(p) if p.view == q.view => cur = p.block_id,
                    _ => break,
                }
            }
        }
    }

    pub fn is_certified_regular(&self, id: &BlockId) -> bool {
        matches!(self.certs.get(id), Some(ChainCert::Regular(_)))
            && self.blocks.get(id).is_some_and(|b| !b.is_fallback())
    }

    pub fn is_endorsed_fblock(&self, id: &BlockId) -> bool {
        self.endorsed.contains(id) && self.blocks.get(id).is_some_and(|b| b.is_fallback())
    }

    /// Certified regular blocks and endorsed f-blocks.
    pub fn in_chain(&self, id: &BlockId) -> bool {
        self.is_certified_regular(id) || self.is_endorsed_fblock(id)
    }

    /// Whether `desc` is `anc` or extends it.
    pub fn extends(&self, desc: BlockId, anc: BlockId) -> bool {
        let Some(target) = self.blocks.get(&anc) else { return false };
        let mut cur = desc;
        loop {
            if cur == anc {
                return true;
            }
            let Some(b) = self.blocks.get(&cur) else { return false };
            if b.is_genesis() || b.round <= target.round {
                return false;
            }
            cur = b.parent_id();
        }
    }

    pub fn endorsed_by_view(&self) -> BTreeMap<View, BTreeSet<(u64, BlockId)>> {
        let mut out: BTreeMap<View, BTreeSet<(u64, BlockId)>> = BTreeMap::new();
        for id in &self.endorsed {
            if let Some(b) = self.blocks.get(id) {
                out.entry(b.view).or_default().insert((b.round, *id));
            }
        }
        out
    }
}
