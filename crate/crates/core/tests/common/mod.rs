#![allow(dead_code)]

use fallback_bft::replica::{Pacemaker, ReplicaConfig, Variant};
use fallback_bft::simnet::{DelayPolicy, DelayRange, NetworkModel, SimConfig};
use fallback_bft::types::MessageKind;

pub fn sync_config(n: usize, variant: Variant, seed: u64, horizon: u64) -> SimConfig {
    let mut rc = ReplicaConfig::new(n, (n - 1) / 3, variant, Pacemaker::AsyncFallback);
    rc.run_seed = seed;
    SimConfig::new(rc, NetworkModel::Synchronous { delta: 1 }, horizon)
}

/// Every proposal arrives well after the timeout; everything else is fast.
pub fn slow_proposals() -> NetworkModel {
    NetworkModel::Asynchronous {
        policy: DelayPolicy::uniform(DelayRange::new(1, 3)).with(MessageKind::Proposal, DelayRange::new(40, 60)),
    }
}

pub fn async_config(n: usize, variant: Variant, pacemaker: Pacemaker, seed: u64, horizon: u64) -> SimConfig {
    let mut rc = ReplicaConfig::new(n, (n - 1) / 3, variant, pacemaker);
    rc.run_seed = seed;
    SimConfig::new(rc, slow_proposals(), horizon)
}
