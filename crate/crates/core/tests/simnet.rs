mod common;

use std::collections::BTreeMap;

use common::{async_config, sync_config};
use fallback_bft::analysis::measure;
use fallback_bft::replica::{Pacemaker, Variant};
use fallback_bft::simnet::{replay, replay_reader, run, Fault, Record, SimError, Simulation, Trace};
use fallback_bft::types::{Message, MessageKind, ReplicaId};

#[test]
fn same_config_same_digest() {
    let cfg = async_config(4, Variant::ThreeChain, Pacemaker::AsyncFallback, 5, 400);
    let a = run(cfg.clone()).unwrap();
    let b = run(cfg).unwrap();
    assert_eq!(a.digest(), b.digest());
    assert_eq!(a.records.len(), b.records.len());
}

#[test]
fn different_seeds_differ() {
    let a = run(async_config(4, Variant::ThreeChain, Pacemaker::AsyncFallback, 1, 300)).unwrap();
    let b = run(async_config(4, Variant::ThreeChain, Pacemaker::AsyncFallback, 2, 300)).unwrap();
    assert_ne!(a.digest(), b.digest());
}

#[test]
fn jsonl_roundtrip_and_replay() {
    let cfg = async_config(4, Variant::TwoChain, Pacemaker::AsyncFallback, 9, 400)
        .with_fault(ReplicaId(2), Fault::Equivocate);
    let t = run(cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.jsonl");
    t.write_jsonl(std::fs::File::create(&path).unwrap()).unwrap();
    let back = Trace::read_jsonl(std::io::BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
    assert_eq!(back, t);
    let rep = replay_reader(std::io::BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
    assert!(rep.matches());
    assert_eq!(rep.replayed, t.digest());
}

#[test]
fn flipped_field_is_detected() {
    let mut t = run(sync_config(4, Variant::ThreeChain, 3, 60)).unwrap();
    let i = t.records.iter().position(|r| matches!(r, Record::Deliver { .. })).unwrap();
    if let Record::Deliver { tick, .. } = &mut t.records[i] {
        *tick += 1;
    }
    match replay(&t) {
        Err(SimError::DigestMismatch { recorded, file, replayed }) => {
            assert_eq!(recorded, replayed);
            assert_ne!(file, recorded);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn self_delivery_is_immediate() {
    let t = run(sync_config(4, Variant::ThreeChain, 0, 40)).unwrap();
    for r in &t.records {
        if let Record::Deliver { from, to, sent, tick, .. } = r {
            if from == to {
                assert_eq!(sent, tick);
            } else {
                assert_eq!(*tick, sent + 1);
            }
        }
    }
}

#[test]
fn crashed_replica_goes_silent() {
    let cfg = sync_config(4, Variant::ThreeChain, 0, 200).with_fault(ReplicaId(1), Fault::Crash { at: 30 });
    let t = run(cfg).unwrap();
    let late = t.records.iter().any(|r| {
        matches!(r, Record::Deliver { from, sent, .. } if *from == ReplicaId(1) && *sent >= 30)
            || matches!(r, Record::Commit { replica, tick, .. } if *replica == ReplicaId(1) && *tick >= 30)
    });
    assert!(!late);
}

#[test]
fn mute_leader_never_proposes() {
    let cfg = async_config(4, Variant::ThreeChain, Pacemaker::AsyncFallback, 0, 600)
        .with_fault(ReplicaId(3), Fault::MuteLeader);
    let t = run(cfg).unwrap();
    let proposed = t.records.iter().any(|r| {
        matches!(r, Record::Deliver { from, msg: Message::Proposal(_) | Message::FbProposal(_), .. } if *from == ReplicaId(3))
    });
    assert!(!proposed);
}

#[test]
fn equivocator_splits_the_committee() {
    let cfg = sync_config(4, Variant::ThreeChain, 0, 40).with_fault(ReplicaId(0), Fault::Equivocate);
    let t = run(cfg).unwrap();
    let mut by_round: BTreeMap<u64, std::collections::BTreeSet<_>> = BTreeMap::new();
    for r in &t.records {
        if let Record::Deliver { from, msg: Message::Proposal(p), .. } = r {
            if *from == ReplicaId(0) {
                by_round.entry(p.block.round).or_default().insert(p.block.id);
            }
        }
    }
    assert_eq!(by_round.get(&1).map(|s| s.len()), Some(2));
}

#[test]
fn footer_counts_undelivered() {
    let t = run(async_config(4, Variant::ThreeChain, Pacemaker::AsyncFallback, 0, 100)).unwrap();
    assert_eq!(t.footer.records, t.records.len());
    assert!(t.footer.undelivered > 0);
}

#[test]
fn rejects_too_many_faults() {
    let cfg = sync_config(4, Variant::ThreeChain, 0, 10)
        .with_fault(ReplicaId(0), Fault::MuteLeader)
        .with_fault(ReplicaId(1), Fault::MuteLeader);
    assert!(matches!(Simulation::new(cfg), Err(SimError::TooManyFaults { faulty: 2, f: 1 })));
}

#[test]
fn steady_state_six_messages_per_round() {
    let t = run(sync_config(4, Variant::ThreeChain, 0, 200)).unwrap();
    // count network messages by the round they belong to, rounds 11..=20
    let mut per_round: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    for r in &t.records {
        let Record::Deliver { from, to, msg, .. } = r else { continue };
        if from == to {
            continue;
        }
        let e = match msg {
            Message::Proposal(p) => &mut per_round.entry(p.block.round).or_default().0,
            Message::Vote(v) => &mut per_round.entry(v.round).or_default().1,
            other => panic!("unexpected {:?} in a synchronous honest run", other.kind()),
        };
        *e += 1;
    }
    for round in 11..=20 {
        assert_eq!(per_round[&round], (3, 3), "round {round}");
    }
    let m = measure(&t);
    assert_eq!(m.messages_by_kind.get(&MessageKind::Timeout), None);
    assert_eq!(m.timeout_messages_total, 0);
}

#[test]
fn monotone_state_under_faults() {
    for (seed, fault) in [(1, Fault::Equivocate), (2, Fault::MuteLeader), (3, Fault::Crash { at: 50 })] {
        for variant in [Variant::ThreeChain, Variant::TwoChain] {
            let cfg = async_config(4, variant, Pacemaker::AsyncFallback, seed, 500).with_fault(ReplicaId(3), fault);
            let mut sim = Simulation::new(cfg).unwrap();
            let snap = |s: &Simulation| {
                s.replicas()
                    .iter()
                    .map(|r| (r.v_cur(), r.rank_lock(), r.qc_high_rank(), r.committed().len(), r.r_cur(), r.mode()))
                    .collect::<Vec<_>>()
            };
            let mut prev = snap(&sim);
            while sim.step() {
                let cur = snap(&sim);
                for (i, (a, b)) in prev.iter().zip(&cur).enumerate() {
                    assert!(b.0 >= a.0 && b.1 >= a.1 && b.2 >= a.2 && b.3 >= a.3, "replica {i} at {}", sim.now());
                    if b.0 == a.0 {
                        assert!(b.4 >= a.4, "r_cur fell within a view");
                    }
                }
                prev = cur;
            }
        }
    }
}
