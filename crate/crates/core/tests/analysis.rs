mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{async_config, sync_config};
use fallback_bft::analysis::{check_safety, fallback_stats, measure, AnalysisError, Divergence};
use fallback_bft::replica::{Note, Pacemaker, Variant};
use fallback_bft::simnet::{run, Fault, Record};
use fallback_bft::types::{BlockId, Message, ReplicaId};

#[test]
fn honest_sync_runs_pass() {
    for seed in 0..100 {
        let variant = if seed % 2 == 0 { Variant::ThreeChain } else { Variant::TwoChain };
        let t = run(sync_config(4, variant, seed, 120)).unwrap();
        let s = check_safety(&t).unwrap();
        assert!(s.passed(), "seed {seed}: {s:?}");
        assert!(s.honest_commits > 0);
    }
}

#[test]
fn planted_commit_breaks_prefix() {
    let mut cfg = sync_config(4, Variant::ThreeChain, 0, 60);
    cfg.plant_conflicting_commit = true;
    let t = run(cfg).unwrap();
    let s = check_safety(&t).unwrap();
    assert!(!s.passed());
    assert!(!s.prefix_consistent);
    let Divergence { replicas, height } = s.first_divergence.unwrap();
    assert_eq!(replicas.1, ReplicaId(0));
    assert!(height >= 1);
}

#[test]
fn forged_height_three_commit() {
    let mut t = run(sync_config(4, Variant::ThreeChain, 0, 60)).unwrap();
    // rewrite replica 2's third committed block
    let mut seen = 0;
    'outer: for r in t.records.iter_mut() {
        if let Record::Commit { replica, blocks, .. } = r {
            if *replica != ReplicaId(2) {
                continue;
            }
            for b in blocks.iter_mut() {
                seen += 1;
                if seen == 3 {
                    *b = BlockId([7; 32]);
                    break 'outer;
                }
            }
        }
    }
    let s = check_safety(&t).unwrap();
    assert!(!s.prefix_consistent);
    let d = s.first_divergence.unwrap();
    assert_eq!(d.height, 3);
    assert!(d.replicas.0 == ReplicaId(2) || d.replicas.1 == ReplicaId(2));
}

#[test]
fn equivocating_leader_keeps_uniqueness() {
    for seed in 0..10 {
        let cfg = sync_config(4, Variant::ThreeChain, seed, 300).with_fault(ReplicaId(0), Fault::Equivocate);
        let t = run(cfg).unwrap();
        let s = check_safety(&t).unwrap();
        assert!(s.uniqueness_violations.is_empty(), "{s:?}");
        assert!(s.passed());
    }
}

#[test]
fn equivocating_fallback_keeps_uniqueness() {
    for seed in 0..10 {
        let variant = if seed % 2 == 0 { Variant::ThreeChain } else { Variant::TwoChain };
        let cfg = async_config(4, variant, Pacemaker::AsyncFallback, seed, 800).with_fault(ReplicaId(1), Fault::Equivocate);
        let t = run(cfg).unwrap();
        let s = check_safety(&t).unwrap();
        assert!(s.passed(), "seed {seed}: {s:?}");
    }
}

#[test]
fn malformed_trace_rejected() {
    let mut t = run(sync_config(4, Variant::ThreeChain, 0, 30)).unwrap();
    t.records.reverse();
    assert!(matches!(check_safety(&t), Err(AnalysisError::MalformedTrace(_))));
    let mut t = run(sync_config(4, Variant::ThreeChain, 0, 30)).unwrap();
    t.records.pop();
    assert!(matches!(check_safety(&t), Err(AnalysisError::MalformedTrace(_))));
}

#[test]
fn check_is_pure() {
    let t = run(async_config(4, Variant::ThreeChain, Pacemaker::AsyncFallback, 4, 400)).unwrap();
    assert_eq!(check_safety(&t).unwrap(), check_safety(&t).unwrap());
    assert_eq!(measure(&t), measure(&t));
}

#[test]
fn latency_three_and_two_chain() {
    for (variant, want) in [(Variant::ThreeChain, 6), (Variant::TwoChain, 4)] {
        let m = measure(&run(sync_config(4, variant, 0, 200)).unwrap());
        assert_eq!(m.latency_ticks.keys().copied().collect::<Vec<_>>(), vec![want], "{variant}");
        assert_eq!(m.latency_hops.unwrap().keys().copied().collect::<Vec<_>>(), vec![want]);
    }
}

#[test]
fn messages_per_commit_is_total_over_commits() {
    let m = measure(&run(sync_config(7, Variant::ThreeChain, 0, 200)).unwrap());
    assert_eq!(m.messages_per_commit, Some(m.messages_total as f64 / m.commits_total as f64));
}

#[test]
fn no_fallbacks_in_sync_run() {
    let m = measure(&run(sync_config(4, Variant::ThreeChain, 0, 100)).unwrap());
    assert_eq!(fallback_stats([&m]), Err(AnalysisError::NoFallbacks));
}

#[test]
fn fallback_instances_match_exit_notes() {
    let t = run(async_config(4, Variant::ThreeChain, Pacemaker::AsyncFallback, 2, 1000)).unwrap();
    let m = measure(&t);
    let mut exits: BTreeMap<u64, BTreeSet<ReplicaId>> = BTreeMap::new();
    for r in &t.records {
        if let Record::Note { replica, note: Note::ExitFallback { view, .. }, .. } = r {
            exits.entry(*view).or_default().insert(*replica);
        }
    }
    let full: Vec<u64> = exits.iter().filter(|(_, s)| s.len() == 4).map(|(v, _)| *v).collect();
    assert_eq!(m.fallback_instances, full);
    assert!(!full.is_empty());
    let s = fallback_stats([&m]).unwrap();
    assert_eq!(s.instances, full.len());
}

#[test]
fn honest_replicas_vote_once_per_round() {
    let cfg = async_config(4, Variant::ThreeChain, Pacemaker::AsyncFallback, 3, 800).with_fault(ReplicaId(0), Fault::Equivocate);
    let t = run(cfg).unwrap();
    let mut seen: BTreeMap<(ReplicaId, u64, u64), BlockId> = BTreeMap::new();
    for r in &t.records {
        if let Record::Deliver { from, msg: Message::Vote(v), .. } = r {
            if *from == ReplicaId(0) {
                continue;
            }
            let prev = seen.insert((*from, v.view, v.round), v.block_id);
            assert!(prev.is_none() || prev == Some(v.block_id));
        }
    }
}

#[test]
fn metrics_are_additive_over_segments() {
    let t = run(async_config(4, Variant::ThreeChain, Pacemaker::AsyncFallback, 6, 600)).unwrap();
    let mid = t.records.len() / 2;
    let count = |recs: &[Record]| {
        recs.iter().filter(|r| matches!(r, Record::Deliver { from, to, .. } if from != to)).count() as u64
    };
    assert_eq!(count(&t.records[..mid]) + count(&t.records[mid..]), measure(&t).messages_total);
}
