use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use super::knowledge::Knowledge;
use super::AnalysisError;
use crate::replica::Pacemaker;
use crate::simnet::{Record, Trace};
use crate::types::{BlockId, ReplicaId, Round, View};

/// Two honest replicas whose committed logs disagree at `height` (1-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Divergence {
    pub replicas: (ReplicaId, ReplicaId),
    pub height: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SafetyReport {
    pub prefix_consistent: bool,
    /// Two certified blocks, or two endorsed f-blocks, sharing view and round.
    pub uniqueness_violations: Vec<BlockId>,
    /// Bad adjacency between certified or endorsed blocks.
    pub structure_violations: Vec<BlockId>,
    /// Endorsed f-blocks of one view that do not form a single chain.
    pub single_chain_violations: Vec<BlockId>,
    pub first_divergence: Option<Divergence>,
    pub honest_commits: usize,
}

impl SafetyReport {
    pub fn passed(&self) -> bool {
        self.prefix_consistent
            && self.uniqueness_violations.is_empty()
            && self.structure_violations.is_empty()
            && self.single_chain_violations.is_empty()
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        let ids = |v: &[BlockId]| {
            if v.is_empty() {
                "none".to_string()
            } else {
                v.iter().map(|b| b.short()).collect::<Vec<_>>().join(",")
            }
        };
        let div = match self.first_divergence {
            Some(d) => format!("{}:{}@{}", d.replicas.0, d.replicas.1, d.height),
            None => "none".into(),
        };
        vec![
            ("safety.passed".into(), self.passed().to_string()),
            ("safety.prefix_consistent".into(), self.prefix_consistent.to_string()),
            ("safety.first_divergence".into(), div),
            ("safety.uniqueness_violations".into(), ids(&self.uniqueness_violations)),
            ("safety.chain_structure_violations".into(), ids(&self.structure_violations)),
            ("safety.single_chain_violations".into(), ids(&self.single_chain_violations)),
            ("safety.locked_extension".into(), "covered by prefix_consistent".into()),
            ("safety.honest_commits".into(), self.honest_commits.to_string()),
        ]
    }
}

pub fn check_safety(trace: &Trace) -> Result<SafetyReport, AnalysisError> {
    let k = Knowledge::from_trace(trace)?;
    let mut report = SafetyReport { prefix_consistent: true, ..Default::default() };
    prefix(trace, &mut report);
    uniqueness(&k, &mut report);
    structure(&k, trace.config().replica.pacemaker, &mut report);
    single_chain(&k, &mut report);
    Ok(report)
}

/// Compares every honest commit, as it happens, against the longest
/// honest log so far.
fn prefix(trace: &Trace, report: &mut SafetyReport) {
    let honest = trace.config().honest();
    let mut logs: HashMap<ReplicaId, usize> = HashMap::new();
    let mut canon: Vec<(BlockId, ReplicaId)> = Vec::new();
    for r in &trace.records {
        let Record::Commit { replica, blocks, .. } = r else { continue };
        if !honest.contains(replica) {
            continue;
        }
        report.honest_commits += blocks.len();
        let len = logs.entry(*replica).or_default();
        for b in blocks {
            match canon.get(*len) {
                Some((c, _)) if c == b => {}
                Some((_, owner)) => {
                    if report.prefix_consistent {
                        report.prefix_consistent = false;
                        report.first_divergence =
                            Some(Divergence { replicas: (*owner, *replica), height: *len + 1 });
                    }
                }
                None => canon.push((*b, *replica)),
            }
            *len += 1;
        }
    }
}

fn uniqueness(k: &Knowledge, report: &mut SafetyReport) {
    let mut certified: HashMap<(View, Round), BlockId> = HashMap::new();
    let mut endorsed: HashMap<(View, Round), BlockId> = HashMap::new();
    let mut bad = BTreeSet::new();
    for (id, b) in &k.blocks {
        let slot = if k.is_certified_regular(id) {
            &mut certified
        } else if k.is_endorsed_fblock(id) {
            &mut endorsed
        } else {
            continue;
        };
        if let Some(other) = slot.insert((b.view, b.round), *id) {
            bad.insert(other);
            bad.insert(*id);
        }
    }
    report.uniqueness_violations = bad.into_iter().collect();
}

/// Adjacent chain blocks: views never decrease, an endorsed f-block never
/// parents a certified regular block of its own view, and under the
/// fallback pacemaker rounds are consecutive.
fn structure(k: &Knowledge, pacemaker: Pacemaker, report: &mut SafetyReport) {
    let mut bad = BTreeSet::new();
    for (id, b) in &k.blocks {
        if b.is_genesis() || !k.in_chain(id) {
            continue;
        }
        let pid = b.parent_id();
        let Some(p) = k.blocks.get(&pid) else { continue };
        if !k.in_chain(&pid) {
            continue;
        }
        let views = b.view >= p.view;
        let rounds = pacemaker == Pacemaker::BaselineTc || b.round == p.round + 1;
        let kinds = !(b.view == p.view && k.is_endorsed_fblock(&pid) && k.is_certified_regular(id));
        if !(views && rounds && kinds) {
            bad.insert(*id);
        }
    }
    report.structure_violations = bad.into_iter().collect();
}

fn single_chain(k: &Knowledge, report: &mut SafetyReport) {
    let mut bad = BTreeSet::new();
    for (_, set) in k.endorsed_by_view() {
        let ids: Vec<BlockId> = set.into_iter().map(|(_, id)| id).collect();
        for w in ids.windows(2) {
            if !k.extends(w[1], w[0]) {
                bad.insert(w[0]);
                bad.insert(w[1]);
            }
        }
    }
    report.single_chain_violations = bad.into_iter().collect();
}
