//! Seeded discrete-event network.
//!
//! Virtual time is integer ticks. Events run in `(tick, seq)` order where
//! `seq` is assigned at scheduling time, so a run is a pure function of its
//! [`SimConfig`]. A multicast expands into one delivery per replica; the
//! sender's own copy is delivered at the same tick and is not network
//! traffic.

mod faults;
mod model;
mod trace;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::io::BufRead;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use faults::{behavior_for, ByzantineBehavior, Crash, Equivocate, Fault, FaultCtx, MuteLeader};
pub use model::{adversary_delay, DelayPolicy, DelayRange, NetworkModel};
pub use trace::{Footer, Header, Record, Trace, TraceError, TRACE_VERSION};

use crate::crypto::{deal, SigningKey};
use crate::replica::{Action, ConfigError, Event, Note, Replica, ReplicaConfig};
use crate::types::{BlockId, Committee, Message, ReplicaId, Round, Tick};
use trace::TraceBuilder;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub replica: ReplicaConfig,
    pub network: NetworkModel,
    #[serde(default)]
    pub faults: BTreeMap<ReplicaId, Fault>,
    pub horizon: Tick,
    /// Test hook: append a forged commit to one honest replica's log.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub plant_conflicting_commit: bool,
}

impl SimConfig {
    pub fn new(replica: ReplicaConfig, network: NetworkModel, horizon: Tick) -> Self {
        SimConfig { replica, network, faults: BTreeMap::new(), horizon, plant_conflicting_commit: false }
    }

    pub fn with_fault(mut self, id: ReplicaId, fault: Fault) -> Self {
        if fault.is_honest() {
            self.faults.remove(&id);
        } else {
            self.faults.insert(id, fault);
        }
        self
    }

    pub fn seed(&self) -> u64 {
        self.replica.run_seed
    }

    pub fn fault_of(&self, id: ReplicaId) -> Fault {
        self.faults.get(&id).copied().unwrap_or_default()
    }

    pub fn honest(&self) -> Vec<ReplicaId> {
        (0..self.replica.n as u32).map(ReplicaId).filter(|r| self.fault_of(*r).is_honest()).collect()
    }

    pub fn validate(&self) -> Result<Committee, SimError> {
        let c = self.replica.validate()?;
        self.network.validate().map_err(SimError::Network)?;
        if let Some(id) = self.faults.keys().find(|id| !c.contains(**id)) {
            return Err(SimError::UnknownReplica(*id));
        }
        let faulty = self.faults.values().filter(|f| !f.is_honest()).count();
        if faulty > c.f {
            return Err(SimError::TooManyFaults { faulty, f: c.f });
        }
        Ok(c)
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("network model: {0}")]
    Network(String),
    #[error("{faulty} faulty replicas exceed f = {f}")]
    TooManyFaults { faulty: usize, f: usize },
    #[error("fault assigned to unknown replica {0}")]
    UnknownReplica(ReplicaId),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("digest mismatch: recorded {recorded}, file contents {file}, replayed {replayed}")]
    DigestMismatch { recorded: String, file: String, replayed: String },
}

#[allow(clippy::large_enum_variant)]
enum Pending {
    Deliver { from: ReplicaId, to: ReplicaId, sent: Tick, msg: Message },
    Timer { replica: ReplicaId, round: Round, gen: u64 },
}

#[allow(clippy::large_enum_variant)]
enum Delays {
    Model(ChaCha8Rng),
    Recorded(HashMap<u64, Tick>),
}

pub struct Simulation {
    cfg: SimConfig,
    replicas: Vec<Replica>,
    behaviors: Vec<Option<Box<dyn ByzantineBehavior>>>,
    keys: Vec<SigningKey>,
    queue: BinaryHeap<Reverse<(Tick, u64)>>,
    pending: HashMap<u64, Pending>,
    next_seq: u64,
    timer_gen: Vec<u64>,
    delays: Delays,
    trace: TraceBuilder,
    now: Tick,
    seq: u64,
    started: bool,
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Self, SimError> {
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed() ^ 0x6e65_7477_6f72_6b00);
        Self::build(cfg, Delays::Model(rng))
    }

    fn build(cfg: SimConfig, delays: Delays) -> Result<Self, SimError> {
        let committee = cfg.validate()?;
        let kc = deal(committee, cfg.seed());
        let replicas = kc
            .keys
            .into_iter()
            .map(|k| Replica::new(k.id(), cfg.replica.clone(), k, kc.verifier.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let keys = deal(committee, cfg.seed()).keys;
        let behaviors = committee.members().map(|id| behavior_for(cfg.fault_of(id))).collect();
        Ok(Simulation {
            trace: TraceBuilder::new(cfg.clone()),
            cfg,
            replicas,
            behaviors,
            keys,
            queue: BinaryHeap::new(),
            pending: HashMap::new(),
            next_seq: 0,
            timer_gen: vec![0; committee.n],
            delays,
            now: 0,
            seq: 0,
            started: false,
        })
    }

    /// Replaces the behavior of one replica with a custom one. Custom
    /// behaviors are not part of the config, so such runs cannot be replayed.
    pub fn with_behavior(mut self, id: ReplicaId, b: Box<dyn ByzantineBehavior>) -> Self {
        self.behaviors[id.index()] = Some(b);
        self
    }

    pub fn replica(&self, id: ReplicaId) -> &Replica {
        &self.replicas[id.index()]
    }

    pub fn replica_mut(&mut self, id: ReplicaId) -> &mut Replica {
        &mut self.replicas[id.index()]
    }

    pub fn replicas(&self) -> &[Replica] {
        &self.replicas
    }

    pub fn run(mut self) -> Trace {
        self.run_in_place()
    }

    /// Runs to the horizon and returns the trace; the replicas stay
    /// inspectable afterwards.
    pub fn run_in_place(&mut self) -> Trace {
        while self.step() {}
        self.finish()
    }

    /// Processes the next event. Returns false once the queue is empty or
    /// the next event lies past the horizon.
    pub fn step(&mut self) -> bool {
        if !self.started {
            self.started = true;
            for i in 0..self.replicas.len() {
                let id = ReplicaId(i as u32);
                if self.alive(id) {
                    let actions = self.replicas[i].start();
                    self.apply(id, actions);
                }
            }
        }
        let Some(Reverse((tick, seq))) = self.queue.peek().copied() else { return false };
        if tick > self.cfg.horizon {
            return false;
        }
        self.queue.pop();
        self.now = tick;
        self.seq = seq;
        let ev = self.pending.remove(&seq).expect("queued event");
        self.process(ev);
        true
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    fn finish(&mut self) -> Trace {
        if self.cfg.plant_conflicting_commit {
            self.plant_conflict();
        }
        let honest = self.cfg.honest();
        let undelivered = self
            .pending
            .values()
            .filter(|p| matches!(p, Pending::Deliver { from, to, .. } if honest.contains(from) && honest.contains(to)))
            .count();
        let cfg = self.cfg.clone();
        let builder = std::mem::replace(&mut self.trace, TraceBuilder::new(cfg));
        builder.finish(undelivered)
    }

    fn alive(&self, id: ReplicaId) -> bool {
        self.behaviors[id.index()].as_ref().is_none_or(|b| b.alive(self.now))
    }

    fn process(&mut self, ev: Pending) {
        match ev {
            Pending::Deliver { from, to, sent, msg } => {
                self.trace.push(Record::Deliver {
                    tick: self.now,
                    seq: self.seq,
                    from,
                    to,
                    sent,
                    units: msg.auth_units(),
                    summary: msg.summary(),
                    msg: msg.clone(),
                });
                if self.alive(to) {
                    let actions = self.replicas[to.index()].handle(Event::Message { from, msg });
                    self.apply(to, actions);
                }
            }
            Pending::Timer { replica, round, gen } => {
                if gen != self.timer_gen[replica.index()] || !self.alive(replica) {
                    return;
                }
                self.trace.push(Record::Timer { tick: self.now, seq: self.seq, replica, round });
                let actions = self.replicas[replica.index()].handle(Event::Timer { round });
                self.apply(replica, actions);
            }
        }
    }

    fn apply(&mut self, me: ReplicaId, mut actions: Vec<Action>) {
        if let Some(b) = self.behaviors[me.index()].as_mut() {
            let ctx = FaultCtx { now: self.now, me, config: &self.cfg.replica, key: &self.keys[me.index()] };
            actions = b.outgoing(&ctx, actions);
        }
        for a in actions {
            match a {
                Action::Send { to, msg } => self.schedule_delivery(me, to, msg),
                Action::Multicast { msg } => {
                    for to in 0..self.replicas.len() as u32 {
                        self.schedule_delivery(me, ReplicaId(to), msg.clone());
                    }
                }
                Action::SetTimer { round, duration } => {
                    let gen = self.timer_gen[me.index()];
                    self.schedule(self.now + duration, Pending::Timer { replica: me, round, gen });
                }
                Action::CancelTimers => self.timer_gen[me.index()] += 1,
                Action::Commit { blocks } => {
                    self.trace.push(Record::Commit { tick: self.now, seq: self.seq, replica: me, blocks })
                }
                Action::Note { note } => {
                    self.trace.push(Record::Note { tick: self.now, seq: self.seq, replica: me, note })
                }
            }
        }
    }

    fn schedule_delivery(&mut self, from: ReplicaId, to: ReplicaId, msg: Message) {
        let seq = self.next_seq;
        let at = if from == to {
            self.now
        } else {
            match &mut self.delays {
                Delays::Model(rng) => {
                    self.now + adversary_delay(&self.cfg.network, &msg.meta(), from, to, self.now, rng)
                }
                // not delivered in the recorded run
                Delays::Recorded(map) => map.get(&seq).copied().unwrap_or(self.cfg.horizon + 1),
            }
        };
        self.schedule(at, Pending::Deliver { from, to, sent: self.now, msg });
    }

    fn schedule(&mut self, at: Tick, ev: Pending) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse((at, seq)));
        self.pending.insert(seq, ev);
    }

    fn plant_conflict(&mut self) {
        let Some(victim) = self.cfg.honest().first().copied() else { return };
        let forged = BlockId(crate::types::Canonical::new("planted").u64(self.cfg.seed()).finish());
        self.trace.push(Record::Note {
            tick: self.now,
            seq: self.seq,
            replica: victim,
            note: Note::Conflict { detail: "planted commit".into() },
        });
        // a forged block at height 1 diverges from any real log
        self.trace.push(Record::Commit { tick: self.now, seq: self.seq, replica: victim, blocks: vec![forged] });
    }
}

/// Runs a configuration from scratch.
pub fn run(cfg: SimConfig) -> Result<Trace, SimError> {
    Ok(Simulation::new(cfg)?.run())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplayReport {
    pub recorded: String,
    pub file: String,
    pub replayed: String,
}

impl ReplayReport {
    pub fn matches(&self) -> bool {
        self.recorded == self.replayed && self.file == self.recorded
    }
}

/// Re-executes the replicas against the recorded delivery schedule.
pub fn replay(trace: &Trace) -> Result<ReplayReport, SimError> {
    let cfg = trace.header.config.clone();
    let sim = Simulation::build(cfg, Delays::Recorded(trace.delivery_schedule()))?;
    let fresh = sim.run();
    let report = ReplayReport {
        recorded: trace.footer.digest.clone(),
        file: trace.recompute_digest(),
        replayed: fresh.footer.digest.clone(),
    };
    if report.matches() {
        Ok(report)
    } else {
        Err(SimError::DigestMismatch { recorded: report.recorded, file: report.file, replayed: report.replayed })
    }
}

pub fn replay_reader(r: impl BufRead) -> Result<ReplayReport, SimError> {
    let trace = Trace::read_jsonl(r)?;
    replay(&trace)
}
