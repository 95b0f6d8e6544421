use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Committee, ReplicaId, Round, Tick};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    ThreeChain,
    TwoChain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pacemaker {
    BaselineTc,
    AsyncFallback,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::ThreeChain => "three_chain",
            Variant::TwoChain => "two_chain",
        }
    }

    /// Length of a fallback chain, and of the commit rule.
    pub fn chain_len(self) -> u8 {
        match self {
            Variant::ThreeChain => 3,
            Variant::TwoChain => 2,
        }
    }
}

impl Pacemaker {
    pub fn as_str(self) -> &'static str {
        match self {
            Pacemaker::BaselineTc => "baseline_tc",
            Pacemaker::AsyncFallback => "async_fallback",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Pacemaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "three_chain" => Ok(Variant::ThreeChain),
            "two_chain" => Ok(Variant::TwoChain),
            _ => Err(format!("unknown variant `{s}`")),
        }
    }
}

impl FromStr for Pacemaker {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "baseline_tc" => Ok(Pacemaker::BaselineTc),
            "async_fallback" => Ok(Pacemaker::AsyncFallback),
            _ => Err(format!("unknown pacemaker `{s}`")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("n = {n}, f = {f}: need f >= 1 and n = 3f + 1")]
    BadCommittee { n: usize, f: usize },
    #[error("leader_rotation_period must be at least 1")]
    ZeroRotationPeriod,
    #[error("timeout_duration must be at least 1 tick")]
    ZeroTimeout,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaConfig {
    pub n: usize,
    pub f: usize,
    pub variant: Variant,
    pub pacemaker: Pacemaker,
    pub timeout_duration: Tick,
    pub leader_rotation_period: u64,
    pub adopt_foreign_fchains: bool,
    pub run_seed: u64,
    pub payload_size: u64,
}

impl Default for ReplicaConfig {
    fn default() -> Self {
        ReplicaConfig {
            n: 4,
            f: 1,
            variant: Variant::ThreeChain,
            pacemaker: Pacemaker::AsyncFallback,
            timeout_duration: 20,
            leader_rotation_period: 4,
            adopt_foreign_fchains: false,
            run_seed: 0,
            payload_size: 0,
        }
    }
}

impl ReplicaConfig {
    pub fn new(n: usize, f: usize, variant: Variant, pacemaker: Pacemaker) -> Self {
        ReplicaConfig { n, f, variant, pacemaker, ..Default::default() }
    }

    pub fn validate(&self) -> Result<Committee, ConfigError> {
        let c = Committee::new(self.n, self.f)
            .ok_or(ConfigError::BadCommittee { n: self.n, f: self.f })?;
        if self.leader_rotation_period == 0 {
            return Err(ConfigError::ZeroRotationPeriod);
        }
        if self.timeout_duration == 0 {
            return Err(ConfigError::ZeroTimeout);
        }
        Ok(c)
    }

    /// Two-chain always adopts; three-chain only when asked to.
    pub fn adopts(&self) -> bool {
        self.adopt_foreign_fchains || self.variant == Variant::TwoChain
    }

    pub fn leader_of(&self, round: Round) -> ReplicaId {
        leader_of(round, self.leader_rotation_period, self.n)
    }
}

/// Round-robin schedule, one leader per `period` consecutive rounds.
pub fn leader_of(round: Round, period: u64, n: usize) -> ReplicaId {
    let slot = round.saturating_sub(1) / period;
    ReplicaId((slot % n as u64) as u32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_every_four_rounds() {
        let l: Vec<u32> = (1..=9).map(|r| leader_of(r, 4, 4).0).collect();
        assert_eq!(l, vec![0, 0, 0, 0, 1, 1, 1, 1, 2]);
        let l: Vec<u32> = (1..=5).map(|r| leader_of(r, 1, 4).0).collect();
        assert_eq!(l, vec![0, 1, 2, 3, 0]);
    }

    #[test]
    fn guard_rejects_bad_committees() {
        let mut c = ReplicaConfig::default();
        assert!(c.validate().is_ok());
        c.f = 0;
        c.n = 1;
        assert_eq!(c.validate(), Err(ConfigError::BadCommittee { n: 1, f: 0 }));
        let c = ReplicaConfig { leader_rotation_period: 0, ..Default::default() };
        assert_eq!(c.validate(), Err(ConfigError::ZeroRotationPeriod));
    }

    #[test]
    fn two_chain_forces_adoption() {
        let c = ReplicaConfig::new(4, 1, Variant::TwoChain, Pacemaker::AsyncFallback);
        assert!(!c.adopt_foreign_fchains);
        assert!(c.adopts());
    }

    #[test]
    fn names_parse() {
        for v in [Variant::ThreeChain, Variant::TwoChain] {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        for p in [Pacemaker::BaselineTc, Pacemaker::AsyncFallback] {
            assert_eq!(p.as_str().parse::<Pacemaker>().unwrap(), p);
        }
    }
}
