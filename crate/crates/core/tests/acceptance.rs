//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

use std::collections::BTreeMap;
use std::time::Instant;

use fallback_bft::analysis::{check_safety, fallback_stats, linear_fit, measure, wilson_interval, MetricsReport};
use fallback_bft::crypto::{elect_leader, CoinSeed};
use fallback_bft::replica::{Pacemaker, ReplicaConfig, Variant};
use fallback_bft::simnet::{replay, run, DelayPolicy, DelayRange, Fault, NetworkModel, Record, SimConfig, Trace};
use fallback_bft::types::{Message, MessageKind, ReplicaId};
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn config(n: usize, variant: Variant, pacemaker: Pacemaker, net: NetworkModel, seed: u64, horizon: u64) -> SimConfig {
    let mut rc = ReplicaConfig::new(n, (n - 1) / 3, variant, pacemaker);
    rc.run_seed = seed;
    SimConfig::new(rc, net, horizon)
}

fn slow_proposals() -> NetworkModel {
    NetworkModel::Asynchronous {
        policy: DelayPolicy::uniform(DelayRange::new(1, 3)).with(MessageKind::Proposal, DelayRange::new(40, 60)),
    }
}

fn roundtrip(t: &Trace) -> Trace {
    let mut buf = Vec::new();
    t.write_jsonl(&mut buf).expect("write trace");
    Trace::read_jsonl(buf.as_slice()).expect("read trace")
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn safety_mix(traces: &mut Vec<Trace>) -> Outcome {
    let nets = [
        NetworkModel::Synchronous { delta: 2 },
        NetworkModel::PartialSynchrony { gst: 150, delta: 2, pre_gst_delay_bound: 60 },
        NetworkModel::Asynchronous {
            policy: DelayPolicy::uniform(DelayRange::new(1, 4)).with(MessageKind::Proposal, DelayRange::new(15, 40)),
        },
    ];
    let mut points = Vec::new();
    for seed in 0..21u64 {
        for n in [4usize, 7] {
            for variant in [Variant::ThreeChain, Variant::TwoChain] {
                for pm in [Pacemaker::BaselineTc, Pacemaker::AsyncFallback] {
                    for net in &nets {
                        let mut cfg = config(n, variant, pm, net.clone(), seed * 1000 + n as u64, 400);
                        cfg.replica.adopt_foreign_fchains = seed % 2 == 1;
                        let f = (n - 1) / 3;
                        for i in 0..f {
                            let fault = match (seed + i as u64) % 3 {
                                0 => Fault::Crash { at: 30 },
                                1 => Fault::MuteLeader,
                                _ => Fault::Equivocate,
                            };
                            cfg = cfg.with_fault(ReplicaId((n - 1 - i) as u32), fault);
                        }
                        points.push(cfg);
                    }
                }
            }
        }
    }
    let results: Vec<(Trace, bool)> = points
        .into_par_iter()
        .map(|cfg| {
            let t = run(cfg).expect("valid config");
            let ok = check_safety(&t).map(|s| s.passed()).unwrap_or(false);
            (t, ok)
        })
        .collect();
    let runs = results.len();
    let mut bad = 0;
    for (t, ok) in results {
        bad += usize::from(!ok);
        traces.push(t);
    }
    Outcome { pass: runs >= 500 && bad == 0, detail: format!("runs={runs} violations={bad}") }
}

fn baseline_vs_fallback() -> Outcome {
    let commits = |pm: Pacemaker| -> Vec<usize> {
        (0..100u64)
            .into_par_iter()
            .map(|seed| {
                let t = run(config(4, Variant::ThreeChain, pm, slow_proposals(), seed, 1000)).unwrap();
                measure(&t).commits_total
            })
            .collect()
    };
    let base = commits(Pacemaker::BaselineTc);
    let fb = commits(Pacemaker::AsyncFallback);
    let base_total: usize = base.iter().sum();
    let live = fb.iter().filter(|c| **c >= 1).count();
    Outcome {
        pass: base_total == 0 && live >= 95,
        detail: format!("baseline_commits={base_total} fallback_live_seeds={live}/100"),
    }
}

fn fallback_probability() -> Outcome {
    let reports: Vec<MetricsReport> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let cfg = config(4, Variant::ThreeChain, Pacemaker::AsyncFallback, slow_proposals(), seed, 2000)
                .with_fault(ReplicaId(3), Fault::MuteLeader);
            measure(&run(cfg).unwrap())
        })
        .collect();
    let Ok(s) = fallback_stats(&reports) else {
        return Outcome { pass: false, detail: "no fallback instances".into() };
    };
    let (lo, hi) = wilson_interval(s.with_commit, s.instances, 1.96);
    let target = 0.75;
    Outcome {
        pass: s.instances >= 300 && s.frequency >= 0.67 && lo <= target && target <= hi,
        detail: format!(
            "instances={} with_commit={} frequency={:.4} ci95=[{lo:.4},{hi:.4}] target={target}",
            s.instances, s.with_commit, s.frequency
        ),
    }
}

fn hand_count_n4() -> Result<(), String> {
    let t = run(config(4, Variant::ThreeChain, Pacemaker::AsyncFallback, NetworkModel::Synchronous { delta: 1 }, 0, 200))
        .unwrap();
    let mut per_round: BTreeMap<u64, u64> = BTreeMap::new();
    for r in &t.records {
        let Record::Deliver { from, to, msg, .. } = r else { continue };
        if from == to {
            continue;
        }
        let round = match msg {
            Message::Proposal(p) => p.block.round,
            Message::Vote(v) => v.round,
            other => return Err(format!("unexpected {:?}", other.kind())),
        };
        *per_round.entry(round).or_default() += 1;
    }
    match (11..=20).find(|r| per_round.get(r) != Some(&6)) {
        Some(r) => Err(format!("round {r} has {:?} messages", per_round.get(&r))),
        None => Ok(()),
    }
}

fn linear_sync_cost() -> Outcome {
    let ns = [4usize, 10, 16, 31];
    let mpc: Vec<f64> = ns
        .par_iter()
        .map(|&n| {
            let cfg = config(n, Variant::ThreeChain, Pacemaker::AsyncFallback, NetworkModel::Synchronous { delta: 1 }, 0, 300);
            measure(&run(cfg).unwrap()).messages_per_commit.unwrap_or(f64::NAN)
        })
        .collect();
    let xs: Vec<f64> = ns.iter().map(|n| *n as f64).collect();
    let fit = linear_fit(&xs, &mpc);
    let hand = hand_count_n4();
    let r2 = fit.map_or(f64::NAN, |f| f.r2);
    let pts = ns.iter().zip(&mpc).map(|(n, m)| format!("{n}:{m:.2}")).collect::<Vec<_>>().join(",");
    Outcome {
        pass: r2 >= 0.99 && hand.is_ok(),
        detail: format!(
            "messages_per_commit={pts} r2={r2:.5} n4_hand_count={}",
            hand.map_or_else(|e| e, |_| "6 per round over rounds 11..=20".into())
        ),
    }
}

fn mean_fallback_cost(n: usize) -> f64 {
    let per_seed: Vec<(f64, usize)> = (0..6u64)
        .into_par_iter()
        .map(|seed| {
            let cfg = config(n, Variant::ThreeChain, Pacemaker::AsyncFallback, slow_proposals(), seed, 600);
            let m = measure(&run(cfg).unwrap());
            (m.fallback_messages.values().sum::<u64>() as f64, m.fallback_messages.len())
        })
        .collect();
    let total: f64 = per_seed.iter().map(|p| p.0).sum();
    let count: usize = per_seed.iter().map(|p| p.1).sum();
    total / count as f64
}

fn quadratic_fallback_cost() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut cache: BTreeMap<usize, f64> = BTreeMap::new();
    for (n1, n2) in [(7usize, 13usize), (10, 22)] {
        for n in [n1, n2] {
            cache.entry(n).or_insert_with(|| mean_fallback_cost(n));
        }
        let ratio = cache[&n2] / cache[&n1];
        let expect = (n2 as f64 / n1 as f64).powi(2);
        let ok = ratio.is_finite() && (ratio - expect).abs() <= 0.25 * expect;
        pass &= ok;
        parts.push(format!("({n1},{n2}) ratio={ratio:.3} expected={expect:.3}"));
    }
    let means = cache.iter().map(|(n, m)| format!("{n}:{m:.1}")).collect::<Vec<_>>().join(",");
    Outcome { pass, detail: format!("{} mean_per_instance={means}", parts.join(" ")) }
}

fn latency() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (variant, want) in [(Variant::ThreeChain, 6u64), (Variant::TwoChain, 4)] {
        let cfg = config(4, variant, Pacemaker::AsyncFallback, NetworkModel::Synchronous { delta: 1 }, 0, 300);
        let m = measure(&run(cfg).unwrap());
        let ticks: Vec<u64> = m.latency_ticks.keys().copied().collect();
        pass &= ticks == [want];
        parts.push(format!("{variant}={ticks:?}"));
    }
    Outcome { pass, detail: parts.join(" ") }
}

fn determinism(traces: &[Trace]) -> Outcome {
    let bad = traces.par_iter().filter(|t| replay(&roundtrip(t)).is_err()).count();
    Outcome { pass: !traces.is_empty() && bad == 0, detail: format!("traces={} mismatches={bad}", traces.len()) }
}

fn coin_uniformity() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [4usize, 7] {
        let mut counts = vec![0u64; n];
        for view in 0..10_000u64 {
            counts[elect_leader(view, CoinSeed(0x5eed), n).index()] += 1;
        }
        let expected = 10_000.0 / n as f64;
        let stat: f64 = counts.iter().map(|c| (*c as f64 - expected).powi(2) / expected).sum();
        let p = 1.0 - ChiSquared::new((n - 1) as f64).unwrap().cdf(stat);
        pass &= p > 0.01;
        parts.push(format!("n={n} chi2={stat:.3} p={p:.4}"));
    }
    Outcome { pass, detail: parts.join(" ") }
}

fn main() {
    let mut traces = Vec::new();
    let mut failed = 0;
    let mut report = |name: &str, f: &mut dyn FnMut() -> Outcome| {
        let t0 = Instant::now();
        let o = f();
        failed += usize::from(!o.pass);
        println!("{} {name}: {} ({:.1}s)", if o.pass { "PASS" } else { "FAIL" }, o.detail, t0.elapsed().as_secs_f64());
    };
    report("1 safety", &mut || safety_mix(&mut traces));
    report("2 baseline_nonliveness", &mut baseline_vs_fallback);
    report("3 fallback_commit_probability", &mut fallback_probability);
    report("4 linear_sync_cost", &mut linear_sync_cost);
    report("5 quadratic_fallback_cost", &mut quadratic_fallback_cost);
    report("6 commit_latency", &mut latency);
    report("7 replay_determinism", &mut || determinism(&traces));
    report("8 coin_uniformity", &mut coin_uniformity);
    if failed > 0 {
        std::process::exit(1);
    }
}
