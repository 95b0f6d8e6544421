//! Scenario files: flat `key = value` lines grouped under `[section]`
//! headers. `#` starts a comment. Unknown sections and keys are errors.
//!
//! ```text
//! [protocol]
//! n = 4
//! variant = three_chain
//! pacemaker = async_fallback
//!
//! [network]
//! model = asynchronous
//! delay = 1..3
//! delay.proposal = 40..60
//!
//! [faults]
//! replica.3 = mute
//!
//! [run]
//! horizon = 2000
//! seeds = 0..100
//! ```

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::replica::ReplicaConfig;
use crate::simnet::{DelayPolicy, DelayRange, Fault, NetworkModel, SimConfig, SimError};
use crate::types::{MessageKind, ReplicaId, Tick};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {err}")]
    Io { path: PathBuf, err: std::io::Error },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown section [{section}]")]
    UnknownSection { line: usize, section: String },
    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey { line: usize, section: String, key: String },
    #[error("line {line}: bad value for `{key}`: {reason}")]
    BadValue { line: usize, key: String, reason: String },
    #[error("empty seed range {0:?}")]
    EmptySeeds(Range<u64>),
    #[error("invalid scenario: {0}")]
    Invalid(#[from] SimError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub sim: SimConfig,
    /// Half-open range; `None` means the single seed in `sim`.
    pub seeds: Option<Range<u64>>,
    pub out: Option<PathBuf>,
    /// Committee sizes for `sweep`; each point uses `f = (n - 1) / 3`.
    pub sweep_n: Vec<usize>,
}

#[derive(Default)]
struct Net {
    model: Option<String>,
    delta: Option<Tick>,
    gst: Option<Tick>,
    pre_gst: Option<Tick>,
    delay: Option<DelayRange>,
    per_kind: BTreeMap<MessageKind, DelayRange>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|err| ScenarioError::Io { path: path.to_path_buf(), err })?;
        text.parse()
    }

    /// Seeds to run, in order.
    pub fn seed_list(&self) -> Vec<u64> {
        match &self.seeds {
            Some(r) => r.clone().collect(),
            None => vec![self.sim.seed()],
        }
    }

    /// The configuration for one seed.
    pub fn config_for(&self, seed: u64) -> SimConfig {
        let mut c = self.sim.clone();
        c.replica.run_seed = seed;
        c
    }

    /// The configuration for one committee size, keeping faults whose
    /// replica exists and which fit the new `f`.
    pub fn config_for_n(&self, n: usize, seed: u64) -> Result<SimConfig, ScenarioError> {
        let mut c = self.config_for(seed);
        c.replica.n = n;
        c.replica.f = n.saturating_sub(1) / 3;
        c.faults.retain(|id, _| id.index() < n);
        c.validate()?;
        Ok(c)
    }
}

fn bad(line: usize, key: &str, reason: impl ToString) -> ScenarioError {
    ScenarioError::BadValue { line, key: key.to_string(), reason: reason.to_string() }
}

fn num<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T, ScenarioError>
where
    T::Err: ToString,
{
    v.parse().map_err(|e: T::Err| bad(line, key, e.to_string()))
}

fn range(line: usize, key: &str, v: &str) -> Result<(u64, u64), ScenarioError> {
    let (a, b) = v.split_once("..").ok_or_else(|| bad(line, key, "expected `a..b`"))?;
    Ok((num(line, key, a.trim())?, num(line, key, b.trim())?))
}

fn delay_range(line: usize, key: &str, v: &str) -> Result<DelayRange, ScenarioError> {
    let (a, b) = range(line, key, v)?;
    if a == 0 || a > b {
        return Err(bad(line, key, "need 1 <= a <= b"));
    }
    Ok(DelayRange::new(a, b))
}

fn flag(line: usize, key: &str, v: &str) -> Result<bool, ScenarioError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(line, key, "expected true or false")),
    }
}

fn fault(line: usize, key: &str, v: &str) -> Result<Fault, ScenarioError> {
    if let Some(at) = v.strip_prefix("crash@") {
        return Ok(Fault::Crash { at: num(line, key, at)? });
    }
    match v {
        "honest" => Ok(Fault::Honest),
        "crash" => Ok(Fault::Crash { at: 0 }),
        "mute" => Ok(Fault::MuteLeader),
        "equivocate" => Ok(Fault::Equivocate),
        _ => Err(bad(line, key, "expected honest, crash@T, mute or equivocate")),
    }
}

impl FromStr for Scenario {
    type Err = ScenarioError;

    fn from_str(text: &str) -> Result<Self, ScenarioError> {
        let mut rc = ReplicaConfig::default();
        let mut f_given = false;
        let mut net = Net::default();
        let mut faults = BTreeMap::new();
        let mut horizon: Tick = 1000;
        let mut seeds = None;
        let mut out = None;
        let mut sweep_n = Vec::new();
        let mut plant = false;
        let mut section = String::new();

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.split('#').next().unwrap_or("").trim();
            if s.is_empty() {
                continue;
            }
            if let Some(name) = s.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| ScenarioError::Syntax { line, msg: "unclosed section header".into() })?;
                section = name.trim().to_string();
                if !matches!(section.as_str(), "protocol" | "network" | "faults" | "run" | "sweep" | "debug") {
                    return Err(ScenarioError::UnknownSection { line, section });
                }
                continue;
            }
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| ScenarioError::Syntax { line, msg: "expected `key = value`".into() })?;
            let (k, v) = (k.trim(), v.trim());
            let unknown =
                || ScenarioError::UnknownKey { line, section: section.clone(), key: k.to_string() };
            match section.as_str() {
                "protocol" => match k {
                    "n" => rc.n = num(line, k, v)?,
                    "f" => {
                        rc.f = num(line, k, v)?;
                        f_given = true;
                    }
                    "variant" => rc.variant = v.parse().map_err(|e| bad(line, k, e))?,
                    "pacemaker" => rc.pacemaker = v.parse().map_err(|e| bad(line, k, e))?,
                    "timeout_duration" => rc.timeout_duration = num(line, k, v)?,
                    "leader_rotation_period" => rc.leader_rotation_period = num(line, k, v)?,
                    "adopt_foreign_fchains" => rc.adopt_foreign_fchains = flag(line, k, v)?,
                    "payload_size" => rc.payload_size = num(line, k, v)?,
                    _ => return Err(unknown()),
                },
                "network" => match k {
                    "model" => net.model = Some(v.to_string()),
                    "delta" => net.delta = Some(num(line, k, v)?),
                    "gst" => net.gst = Some(num(line, k, v)?),
                    "pre_gst_delay_bound" => net.pre_gst = Some(num(line, k, v)?),
                    "delay" => net.delay = Some(delay_range(line, k, v)?),
                    _ => {
                        let kind = k.strip_prefix("delay.").ok_or_else(unknown)?;
                        let kind: MessageKind = kind.parse().map_err(|_| unknown())?;
                        net.per_kind.insert(kind, delay_range(line, k, v)?);
                    }
                },
                "faults" => {
                    let id = k.strip_prefix("replica.").ok_or_else(unknown)?;
                    let id = ReplicaId(num(line, k, id)?);
                    faults.insert(id, fault(line, k, v)?);
                }
                "run" => match k {
                    "horizon" => horizon = num(line, k, v)?,
                    "seed" => rc.run_seed = num(line, k, v)?,
                    "seeds" => {
                        let (a, b) = range(line, k, v)?;
                        seeds = Some(a..b);
                    }
                    "out" => out = Some(PathBuf::from(v)),
                    _ => return Err(unknown()),
                },
                "sweep" => match k {
                    "n" => {
                        sweep_n = v
                            .split(',')
                            .map(|x| num(line, k, x.trim()))
                            .collect::<Result<Vec<usize>, _>>()?;
                    }
                    _ => return Err(unknown()),
                },
                "debug" => match k {
                    "plant_conflicting_commit" => plant = flag(line, k, v)?,
                    _ => return Err(unknown()),
                },
                _ => return Err(ScenarioError::Syntax { line, msg: "key outside any section".into() }),
            }
        }

        if !f_given {
            rc.f = rc.n.saturating_sub(1) / 3;
        }
        let network = build_network(net)?;
        let mut sim = SimConfig::new(rc, network, horizon);
        sim.plant_conflicting_commit = plant;
        for (id, f) in faults {
            sim = sim.with_fault(id, f);
        }
        sim.validate()?;
        if let Some(r) = &seeds {
            if r.is_empty() {
                return Err(ScenarioError::EmptySeeds(r.clone()));
            }
        }
        Ok(Scenario { sim, seeds, out, sweep_n })
    }
}

fn build_network(net: Net) -> Result<NetworkModel, ScenarioError> {
    let missing = |key: &str| bad(0, key, "required by the chosen model");
    Ok(match net.model.as_deref().unwrap_or("synchronous") {
        "synchronous" => NetworkModel::Synchronous { delta: net.delta.unwrap_or(1) },
        "partial_synchrony" => NetworkModel::PartialSynchrony {
            gst: net.gst.ok_or_else(|| missing("gst"))?,
            delta: net.delta.unwrap_or(1),
            pre_gst_delay_bound: net.pre_gst.ok_or_else(|| missing("pre_gst_delay_bound"))?,
        },
        "asynchronous" => NetworkModel::Asynchronous {
            policy: DelayPolicy {
                default: net.delay.ok_or_else(|| missing("delay"))?,
                per_kind: net.per_kind,
            },
        },
        other => return Err(bad(0, "model", format!("unknown model `{other}`"))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replica::{Pacemaker, Variant};

    #[test]
    fn full_example() {
        let s: Scenario = "
            [protocol]
            n = 7
            variant = two_chain
            pacemaker = baseline_tc
            timeout_duration = 30   # ticks
            [network]
            model = asynchronous
            delay = 1..3
            delay.proposal = 40..60
            [faults]
            replica.6 = crash@100
            replica.5 = equivocate
            [run]
            horizon = 500
            seeds = 3..8
            out = runs
            [sweep]
            n = 4, 10
        "
        .parse()
        .unwrap();
        assert_eq!((s.sim.replica.n, s.sim.replica.f), (7, 2));
        assert_eq!(s.sim.replica.variant, Variant::TwoChain);
        assert_eq!(s.sim.replica.pacemaker, Pacemaker::BaselineTc);
        assert_eq!(s.sim.replica.timeout_duration, 30);
        assert_eq!(s.sim.fault_of(ReplicaId(6)), Fault::Crash { at: 100 });
        assert_eq!(s.seed_list(), vec![3, 4, 5, 6, 7]);
        assert_eq!(s.sweep_n, vec![4, 10]);
        let NetworkModel::Asynchronous { policy } = &s.sim.network else { panic!() };
        assert_eq!(policy.range_for(MessageKind::Proposal), DelayRange::new(40, 60));
        assert_eq!(policy.range_for(MessageKind::Vote), DelayRange::new(1, 3));
    }

    #[test]
    fn defaults() {
        let s: Scenario = "".parse().unwrap();
        assert_eq!(s.sim.network, NetworkModel::Synchronous { delta: 1 });
        assert_eq!(s.seed_list(), vec![0]);
    }

    #[test]
    fn rejects_bad_committee() {
        let e = "[protocol]\nn = 5\nf = 1\n".parse::<Scenario>().unwrap_err();
        assert!(matches!(e, ScenarioError::Invalid(_)), "{e}");
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(matches!(
            "[protocol]\nspeed = 3\n".parse::<Scenario>(),
            Err(ScenarioError::UnknownKey { line: 2, .. })
        ));
        assert!(matches!("[colour]\n".parse::<Scenario>(), Err(ScenarioError::UnknownSection { .. })));
        assert!(matches!(
            "[network]\ndelay.bogus = 1..2\n".parse::<Scenario>(),
            Err(ScenarioError::UnknownKey { .. })
        ));
    }

    #[test]
    fn rejects_empty_seed_range() {
        assert!(matches!("[run]\nseeds = 5..5\n".parse::<Scenario>(), Err(ScenarioError::EmptySeeds(_))));
    }

    #[test]
    fn too_many_faults() {
        let e = "[faults]\nreplica.0 = mute\nreplica.1 = mute\n".parse::<Scenario>().unwrap_err();
        assert!(matches!(e, ScenarioError::Invalid(SimError::TooManyFaults { .. })));
    }

    #[test]
    fn sweep_points_recompute_f() {
        let s: Scenario = "[faults]\nreplica.3 = mute\n".parse().unwrap();
        let c = s.config_for_n(10, 9).unwrap();
        assert_eq!((c.replica.n, c.replica.f, c.seed()), (10, 3, 9));
        assert_eq!(c.fault_of(ReplicaId(3)), Fault::MuteLeader);
    }
}
