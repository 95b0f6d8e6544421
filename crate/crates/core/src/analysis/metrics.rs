use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use super::knowledge::Knowledge;
use super::AnalysisError;
use crate::replica::Note;
use crate::simnet::{Record, Trace};
use crate::types::{BlockId, MessageKind, ReplicaId, Tick, View};

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricsReport {
    /// Distinct blocks committed by at least one honest replica.
    pub commits_total: usize,
    /// Network deliveries; a replica's copy to itself is not counted.
    pub messages_total: u64,
    pub authenticator_units_total: u64,
    pub messages_per_commit: Option<f64>,
    /// First honest commit tick minus proposal tick, per committed block.
    pub latency_ticks: BTreeMap<Tick, usize>,
    /// Same, in message delays; only when every delay is one constant.
    pub latency_hops: Option<BTreeMap<Tick, usize>>,
    /// Views whose fallback every honest replica exited.
    pub fallback_instances: Vec<View>,
    /// Completed instances with an honest commit of one of their f-blocks.
    pub fallback_instances_with_commit: Vec<View>,
    pub timeout_messages_total: u64,
    /// Network messages belonging to each completed fallback instance.
    pub fallback_messages: BTreeMap<View, u64>,
    pub messages_by_kind: BTreeMap<MessageKind, u64>,
}

impl MetricsReport {
    pub fn mean_fallback_messages(&self) -> Option<f64> {
        if self.fallback_messages.is_empty() {
            return None;
        }
        Some(self.fallback_messages.values().sum::<u64>() as f64 / self.fallback_messages.len() as f64)
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        let hist = |h: &BTreeMap<Tick, usize>| {
            if h.is_empty() {
                "none".to_string()
            } else {
                h.iter().map(|(k, v)| format!("{k}:{v}")).collect::<Vec<_>>().join(",")
            }
        };
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x:.4}"));
        let mut out = vec![
            ("metrics.commits_total".into(), self.commits_total.to_string()),
            ("metrics.messages_total".into(), self.messages_total.to_string()),
            ("metrics.authenticator_units_total".into(), self.authenticator_units_total.to_string()),
            ("metrics.messages_per_commit".into(), opt(self.messages_per_commit)),
            ("metrics.latency_ticks".into(), hist(&self.latency_ticks)),
            ("metrics.latency_hops".into(), self.latency_hops.as_ref().map_or("n/a".into(), hist)),
            ("metrics.timeout_messages_total".into(), self.timeout_messages_total.to_string()),
            ("metrics.fallback_instances".into(), self.fallback_instances.len().to_string()),
            (
                "metrics.fallback_instances_with_commit".into(),
                self.fallback_instances_with_commit.len().to_string(),
            ),
            ("metrics.fallback_messages_mean".into(), opt(self.mean_fallback_messages())),
        ];
        for (k, v) in &self.messages_by_kind {
            out.push((format!("metrics.messages.{k}"), v.to_string()));
        }
        out
    }
}

/// Counts traffic, commits, latency and fallback outcomes. Records that do
/// not verify are ignored, so this never fails.
pub fn measure(trace: &Trace) -> MetricsReport {
    let cfg = trace.config();
    let honest: BTreeSet<ReplicaId> = cfg.honest().into_iter().collect();
    let knowledge = Knowledge::from_trace(trace).ok();
    let mut m = MetricsReport::default();
    let mut first_commit: HashMap<BlockId, Tick> = HashMap::new();
    let mut commit_order: Vec<BlockId> = Vec::new();
    let mut proposed_at: HashMap<BlockId, Tick> = HashMap::new();
    let mut exits: BTreeMap<View, BTreeSet<ReplicaId>> = BTreeMap::new();
    let mut per_view: BTreeMap<View, u64> = BTreeMap::new();

    for r in &trace.records {
        match r {
            Record::Deliver { from, to, sent, units, msg, .. } => {
                if let crate::types::Message::Proposal(p) = msg {
                    proposed_at.entry(p.block.id).or_insert(*sent);
                } else if let crate::types::Message::FbProposal(p) = msg {
                    proposed_at.entry(p.block.id).or_insert(*sent);
                }
                if from == to {
                    continue;
                }
                m.messages_total += 1;
                m.authenticator_units_total += units;
                *m.messages_by_kind.entry(msg.kind()).or_default() += 1;
                if msg.kind() == MessageKind::Timeout {
                    m.timeout_messages_total += 1;
                }
                if let Some(v) = msg.fallback_view() {
                    *per_view.entry(v).or_default() += 1;
                }
            }
            Record::Commit { tick, replica, blocks, .. } if honest.contains(replica) => {
                for b in blocks {
                    if !first_commit.contains_key(b) {
                        first_commit.insert(*b, *tick);
                        commit_order.push(*b);
                    }
                }
            }
            Record::Note { replica, note: Note::ExitFallback { view, .. }, .. } if honest.contains(replica) => {
                exits.entry(*view).or_default().insert(*replica);
            }
            _ => {}
        }
    }

    m.commits_total = commit_order.len();
    if m.commits_total > 0 {
        m.messages_per_commit = Some(m.messages_total as f64 / m.commits_total as f64);
    }
    let delay = cfg.network.constant_delay();
    let mut hops = BTreeMap::new();
    for b in &commit_order {
        let Some(sent) = proposed_at.get(b) else { continue };
        let lat = first_commit[b].saturating_sub(*sent);
        *m.latency_ticks.entry(lat).or_default() += 1;
        if let Some(d) = delay {
            *hops.entry(lat / d).or_default() += 1;
        }
    }
    if delay.is_some() {
        m.latency_hops = Some(hops);
    }

    m.fallback_instances =
        exits.iter().filter(|(_, who)| who.len() == honest.len()).map(|(v, _)| *v).collect();
    let committed_fviews: BTreeSet<View> = match &knowledge {
        Some(k) => commit_order
            .iter()
            .filter_map(|id| k.blocks.get(id))
            .filter(|b| b.is_fallback())
            .map(|b| b.view)
            .collect(),
        None => BTreeSet::new(),
    };
    m.fallback_instances_with_commit =
        m.fallback_instances.iter().copied().filter(|v| committed_fviews.contains(v)).collect();
    m.fallback_messages =
        m.fallback_instances.iter().map(|v| (*v, per_view.get(v).copied().unwrap_or(0))).collect();
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FallbackStats {
    pub instances: usize,
    pub with_commit: usize,
    pub frequency: f64,
}

/// Fraction of completed fallback instances after which some honest
/// replica committed an f-block proposed in that instance.
pub fn fallback_stats<'a>(reports: impl IntoIterator<Item = &'a MetricsReport>) -> Result<FallbackStats, AnalysisError> {
    let (mut instances, mut with_commit) = (0, 0);
    for r in reports {
        instances += r.fallback_instances.len();
        with_commit += r.fallback_instances_with_commit.len();
    }
    if instances == 0 {
        return Err(AnalysisError::NoFallbacks);
    }
    Ok(FallbackStats { instances, with_commit, frequency: with_commit as f64 / instances as f64 })
}
