//! Per-replica protocol state machine.
//!
//! A [`Replica`] is a deterministic event handler: feed it an [`Event`] and
//! it mutates its state and returns the [`Action`]s to perform. Steady state,
//! both pacemakers and both commit variants live here, selected by
//! [`ReplicaConfig`].

mod chain;
mod config;
mod fallback;
mod pacemaker;
mod steady;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chain::is_endorsement_root;
pub use config::{leader_of, ConfigError, Pacemaker, ReplicaConfig, Variant};

use crate::crypto::{Share, SigningKey, Verifier};
use crate::types::{
    Block, BlockId, ChainCert, CoinHistory, Committee, Message, Rank, ReplicaId, Round, Statement,
    Tick, TxnBatch, View,
};

/// Messages buffered per sending peer before further ones are dropped.
pub const BUFFER_CAP: usize = 1024;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Send { to: ReplicaId, msg: Message },
    /// To every replica, including the sender.
    Multicast { msg: Message },
    SetTimer { round: Round, duration: Tick },
    CancelTimers,
    /// Newly committed blocks, oldest first.
    Commit { blocks: Vec<BlockId> },
    Note { note: Note },
}

/// State transitions worth recording in a trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "note", rename_all = "snake_case")]
pub enum Note {
    ModeChange { mode: bool, view: View },
    EnterFallback { view: View },
    ExitFallback { view: View, leader: ReplicaId },
    Conflict { detail: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[allow(clippy::large_enum_variant)]
pub enum Event {
    Message { from: ReplicaId, msg: Message },
    Timer { round: Round },
}

/// Why an inbound message was dropped.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Reject {
    #[error("malformed: {0}")]
    Malformed(&'static str),
    #[error("certificate does not verify")]
    InvalidCertificate,
    #[error("share does not verify")]
    InvalidShare,
    #[error("sender does not match")]
    WrongSender,
    #[error("not addressed to this replica")]
    WrongRecipient,
    #[error("wrong f-QC height")]
    WrongHeight,
    #[error("stale view")]
    StaleView,
    #[error("message for this pacemaker only")]
    WrongPacemaker,
    #[error("conflicting proposal ignored")]
    Equivocation,
    #[error("buffer full for {0}")]
    BufferFull(ReplicaId),
}

pub struct Replica {
    id: ReplicaId,
    cfg: ReplicaConfig,
    committee: Committee,
    key: SigningKey,
    verifier: Arc<Verifier>,

    r_vote: Round,
    rank_lock: Rank,
    r_cur: Round,
    v_cur: View,
    qc_high: ChainCert,
    mode: bool,
    fvoted_round: Vec<Round>,
    fvoted_height: Vec<u8>,

    blocks: HashMap<BlockId, Block>,
    certs: HashMap<BlockId, ChainCert>,
    fcerts_by_view: BTreeMap<View, Vec<BlockId>>,
    endorsed: HashSet<BlockId>,
    coins: CoinHistory,
    committed: Vec<BlockId>,
    committed_set: HashSet<BlockId>,

    votes: HashMap<Statement, BTreeMap<ReplicaId, Share>>,
    formed: HashSet<Statement>,
    timeouts_round: BTreeMap<Round, BTreeMap<ReplicaId, Share>>,
    timeouts_view: BTreeMap<View, BTreeMap<ReplicaId, Share>>,
    coin_shares: BTreeMap<View, BTreeMap<ReplicaId, Share>>,
    relays: BTreeMap<View, BTreeSet<ReplicaId>>,

    seen_proposal: HashMap<(View, Round), BlockId>,
    seen_fblock: HashMap<(View, ReplicaId, u8), BlockId>,
    proposed: HashSet<(View, Round)>,
    timed_out_round: Round,
    timeout_sent_view: Option<View>,
    entered_view: Option<View>,
    coin_sent_view: Option<View>,
    fproposed_height: u8,
    relayed: bool,
    next_payload: u64,

    inbox: VecDeque<(ReplicaId, Message)>,
    waiting: HashMap<BlockId, Vec<(ReplicaId, Message)>>,
    future: BTreeMap<View, Vec<(ReplicaId, Message)>>,
    buffered: Vec<usize>,
    pending_locks: HashMap<BlockId, Vec<ChainCert>>,
    drops: u64,
    validity: Box<dyn Fn(&TxnBatch) -> bool + Send>,

    out: Vec<Action>,
}

impl Replica {
    pub fn new(
        id: ReplicaId,
        cfg: ReplicaConfig,
        key: SigningKey,
        verifier: Arc<Verifier>,
    ) -> Result<Self, ConfigError> {
        let committee = cfg.validate()?;
        assert_eq!(key.id(), id, "signing key belongs to another replica");
        let genesis = Block::genesis();
        let gcert = verifier.genesis_cert();
        let n = committee.n;
        let mut r = Replica {
            id,
            cfg,
            committee,
            key,
            verifier,
            r_vote: 0,
            rank_lock: Rank::default(),
            r_cur: 1,
            v_cur: 0,
            qc_high: gcert.clone(),
            mode: false,
            fvoted_round: vec![0; n],
            fvoted_height: vec![0; n],
            blocks: HashMap::new(),
            certs: HashMap::new(),
            fcerts_by_view: BTreeMap::new(),
            endorsed: HashSet::new(),
            coins: CoinHistory::new(),
            committed: Vec::new(),
            committed_set: HashSet::new(),
            votes: HashMap::new(),
            formed: HashSet::new(),
            timeouts_round: BTreeMap::new(),
            timeouts_view: BTreeMap::new(),
            coin_shares: BTreeMap::new(),
            relays: BTreeMap::new(),
            seen_proposal: HashMap::new(),
            seen_fblock: HashMap::new(),
            proposed: HashSet::new(),
            timed_out_round: 0,
            timeout_sent_view: None,
            entered_view: None,
            coin_sent_view: None,
            fproposed_height: 0,
            relayed: false,
            next_payload: 0,
            inbox: VecDeque::new(),
            waiting: HashMap::new(),
            future: BTreeMap::new(),
            buffered: vec![0; n],
            pending_locks: HashMap::new(),
            drops: 0,
            validity: Box::new(|_| true),
            out: Vec::new(),
        };
        r.certs.insert(genesis.id, gcert);
        r.blocks.insert(genesis.id, genesis);
        Ok(r)
    }

    /// Builds the replica and enters round 1.
    pub fn init(
        id: ReplicaId,
        cfg: ReplicaConfig,
        key: SigningKey,
        verifier: Arc<Verifier>,
    ) -> Result<(Self, Vec<Action>), ConfigError> {
        let mut r = Self::new(id, cfg, key, verifier)?;
        let actions = r.start();
        Ok((r, actions))
    }

    pub fn start(&mut self) -> Vec<Action> {
        self.out.push(Action::SetTimer { round: self.r_cur, duration: self.cfg.timeout_duration });
        self.maybe_propose();
        std::mem::take(&mut self.out)
    }

    pub fn handle(&mut self, event: Event) -> Vec<Action> {
        match event {
            Event::Timer { round } => self.on_timer(round),
            Event::Message { from, msg } => self.inbox.push_back((from, msg)),
        }
        while let Some((from, msg)) = self.inbox.pop_front() {
            if let Err(e) = self.dispatch(from, msg) {
                self.drops += 1;
                log::debug!("{} dropped message from {from}: {e}", self.id);
            }
        }
        std::mem::take(&mut self.out)
    }

    fn dispatch(&mut self, from: ReplicaId, msg: Message) -> Result<(), Reject> {
        if !self.committee.contains(from) {
            return Err(Reject::WrongSender);
        }
        match msg {
            Message::Proposal(p) => self.on_proposal(from, p),
            Message::Vote(v) => self.on_vote(from, v),
            Message::Timeout(t) => self.on_timeout(from, t),
            Message::TcRelay(tc) => self.on_tc_relay(tc),
            Message::FtcRelay(ftc) => self.on_ftc_relay(ftc),
            Message::FbProposal(p) => self.on_fb_proposal(from, p),
            Message::FbVote(v) => self.on_fb_vote(from, v),
            Message::FqcRelay(r) => self.on_fqc_relay(from, r),
            Message::CoinShare(c) => self.on_coin_share(from, c),
            Message::CoinQcRelay(c) => self.on_coin_qc(from, c),
        }
    }

    /// External validity predicate on payloads; blocks failing it are
    /// neither stored nor voted for. Accepts everything by default.
    pub fn set_validity(&mut self, pred: impl Fn(&TxnBatch) -> bool + Send + 'static) {
        self.validity = Box::new(pred);
    }

    pub fn id(&self) -> ReplicaId {
        self.id
    }
    pub fn config(&self) -> &ReplicaConfig {
        &self.cfg
    }
    pub fn r_vote(&self) -> Round {
        self.r_vote
    }
    pub fn rank_lock(&self) -> Rank {
        self.rank_lock
    }
    pub fn r_cur(&self) -> Round {
        self.r_cur
    }
    pub fn v_cur(&self) -> View {
        self.v_cur
    }
    pub fn mode(&self) -> bool {
        self.mode
    }
    pub fn qc_high(&self) -> &ChainCert {
        &self.qc_high
    }
    pub fn qc_high_rank(&self) -> Rank {
        self.rank(&self.qc_high)
    }
    pub fn fvoted_round(&self, j: ReplicaId) -> Round {
        self.fvoted_round[j.index()]
    }
    pub fn fvoted_height(&self, j: ReplicaId) -> u8 {
        self.fvoted_height[j.index()]
    }
    pub fn committed(&self) -> &[BlockId] {
        &self.committed
    }
    pub fn coins(&self) -> &CoinHistory {
        &self.coins
    }
    pub fn block(&self, id: &BlockId) -> Option<&Block> {
        self.blocks.get(id)
    }
    pub fn is_endorsed(&self, id: &BlockId) -> bool {
        self.endorsed.contains(id)
    }
    pub fn drops(&self) -> u64 {
        self.drops
    }

    fn send(&mut self, to: ReplicaId, msg: Message) {
        self.out.push(Action::Send { to, msg });
    }

    fn multicast(&mut self, msg: Message) {
        self.out.push(Action::Multicast { msg });
    }

    fn note(&mut self, note: Note) {
        self.out.push(Action::Note { note });
    }

    fn set_mode(&mut self, mode: bool) {
        if self.mode != mode {
            self.mode = mode;
            self.note(Note::ModeChange { mode, view: self.v_cur });
        }
    }

    fn payload(&mut self) -> TxnBatch {
        self.next_payload += 1;
        TxnBatch { id: ((self.id.0 as u64) << 48) | self.next_payload, size: self.cfg.payload_size }
    }

    fn verify_share(&self, from: ReplicaId, share: &Share, st: &Statement) -> Result<(), Reject> {
        if share.signer != from {
            return Err(Reject::WrongSender);
        }
        if !share.matches(st) || !self.verifier.verify_share(share) {
            return Err(Reject::InvalidShare);
        }
        Ok(())
    }

    fn buffer_on(&mut self, dep: BlockId, from: ReplicaId, msg: Message) -> Result<(), Reject> {
        self.reserve(from)?;
        self.waiting.entry(dep).or_default().push((from, msg));
        Ok(())
    }

    fn buffer_future(&mut self, view: View, from: ReplicaId, msg: Message) -> Result<(), Reject> {
        self.reserve(from)?;
        self.future.entry(view).or_default().push((from, msg));
        Ok(())
    }

    fn reserve(&mut self, from: ReplicaId) -> Result<(), Reject> {
        let c = &mut self.buffered[from.index()];
        if *c >= BUFFER_CAP {
            return Err(Reject::BufferFull(from));
        }
        *c += 1;
        Ok(())
    }

    fn release(&mut self, items: Vec<(ReplicaId, Message)>) {
        for (from, msg) in items {
            self.buffered[from.index()] -= 1;
            self.inbox.push_back((from, msg));
        }
    }

    /// Re-queues buffered messages whose view is no longer in the future.
    fn release_future(&mut self) {
        let later = self.future.split_off(&(self.v_cur + 1));
        let ready = std::mem::replace(&mut self.future, later);
        for (_, items) in ready {
            self.release(items);
        }
    }

    /// Structural checks shared by regular and fallback blocks.
    fn check_block(&self, b: &Block) -> Result<(), Reject> {
        if !b.verify_id() {
            return Err(Reject::Malformed("block id does not match contents"));
        }
        if b.round <= b.parent.round() || b.view < b.parent.view() {
            return Err(Reject::Malformed("block does not extend its parent"));
        }
        if let Some(h) = b.height() {
            if h == 0 || h > self.cfg.variant.chain_len() {
                return Err(Reject::WrongHeight);
            }
        }
        if !self.verifier.verify_chain_cert(&b.parent) {
            return Err(Reject::InvalidCertificate);
        }
        if !(self.validity)(&b.payload) {
            return Err(Reject::Malformed("payload fails external validity"));
        }
        Ok(())
    }
}
