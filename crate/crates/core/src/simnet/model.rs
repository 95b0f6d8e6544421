use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::types::{MessageKind, MessageMeta, ReplicaId, Tick};

/// Inclusive tick range, `1 <= min <= max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayRange {
    pub min: Tick,
    pub max: Tick,
}

impl DelayRange {
    pub const fn new(min: Tick, max: Tick) -> Self {
        DelayRange { min, max }
    }

    pub const fn fixed(d: Tick) -> Self {
        DelayRange { min: d, max: d }
    }

    fn valid(&self) -> bool {
        self.min >= 1 && self.min <= self.max
    }

    fn draw(&self, rng: &mut impl Rng) -> Tick {
        rng.gen_range(self.min..=self.max)
    }
}

/// Adversary-chosen delays for the asynchronous model, by message kind.
///
/// The policy sees only [`MessageMeta`]; it has no access to coin shares or
/// the election, so it cannot target the leader a coin will elect.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayPolicy {
    pub default: DelayRange,
    #[serde(default)]
    pub per_kind: BTreeMap<MessageKind, DelayRange>,
}

impl DelayPolicy {
    pub fn uniform(range: DelayRange) -> Self {
        DelayPolicy { default: range, per_kind: BTreeMap::new() }
    }

    pub fn with(mut self, kind: MessageKind, range: DelayRange) -> Self {
        self.per_kind.insert(kind, range);
        self
    }

    pub fn range_for(&self, kind: MessageKind) -> DelayRange {
        self.per_kind.get(&kind).copied().unwrap_or(self.default)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum NetworkModel {
    Synchronous { delta: Tick },
    PartialSynchrony { gst: Tick, delta: Tick, pre_gst_delay_bound: Tick },
    Asynchronous { policy: DelayPolicy },
}

impl NetworkModel {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            NetworkModel::Synchronous { delta } if *delta == 0 => Err("delta must be >= 1".into()),
            NetworkModel::PartialSynchrony { delta, pre_gst_delay_bound, .. }
                if *delta == 0 || *pre_gst_delay_bound == 0 =>
            {
                Err("delta and pre_gst_delay_bound must be >= 1".into())
            }
            NetworkModel::Asynchronous { policy } => {
                let bad = std::iter::once(&policy.default)
                    .chain(policy.per_kind.values())
                    .any(|r| !r.valid());
                if bad {
                    Err("delay ranges need 1 <= min <= max".into())
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// The single delay every message gets, if the model fixes one.
    pub fn constant_delay(&self) -> Option<Tick> {
        match self {
            NetworkModel::Synchronous { delta: 1 } => Some(1),
            NetworkModel::Asynchronous { policy } => {
                let d = policy.default;
                let all = std::iter::once(&d).chain(policy.per_kind.values());
                let same = all.clone().all(|r| r.min == r.max && r.min == d.min);
                same.then_some(d.min)
            }
            _ => None,
        }
    }

    /// Bound honest messages sent at `now` must respect, if any.
    pub fn bound_at(&self, now: Tick) -> Option<Tick> {
        match self {
            NetworkModel::Synchronous { delta } => Some(*delta),
            NetworkModel::PartialSynchrony { gst, delta, .. } if now >= *gst => Some(*delta),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NetworkModel::Synchronous { .. } => "synchronous",
            NetworkModel::PartialSynchrony { .. } => "partial_synchrony",
            NetworkModel::Asynchronous { .. } => "asynchronous",
        }
    }
}

/// Delay for one message in ticks, always at least 1.
///
/// Before GST, partial synchrony draws up to `pre_gst_delay_bound` but never
/// past `gst + delta`.
pub fn adversary_delay(
    model: &NetworkModel,
    meta: &MessageMeta,
    _from: ReplicaId,
    _to: ReplicaId,
    now: Tick,
    rng: &mut impl Rng,
) -> Tick {
    match model {
        NetworkModel::Synchronous { delta } => DelayRange::new(1, *delta).draw(rng),
        NetworkModel::PartialSynchrony { gst, delta, pre_gst_delay_bound } => {
            if now >= *gst {
                DelayRange::new(1, *delta).draw(rng)
            } else {
                let d = DelayRange::new(1, *pre_gst_delay_bound).draw(rng);
                d.min((gst + delta - now).max(1))
            }
        }
        NetworkModel::Asynchronous { policy } => policy.range_for(meta.kind).draw(rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn meta(kind: MessageKind) -> MessageMeta {
        MessageMeta { kind, round: Some(1), view: Some(0) }
    }

    #[test]
    fn synchronous_respects_delta() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = NetworkModel::Synchronous { delta: 1 };
        for _ in 0..200 {
            let d = adversary_delay(&m, &meta(MessageKind::Vote), ReplicaId(0), ReplicaId(1), 5, &mut rng);
            assert_eq!(d, 1);
        }
    }

    #[test]
    fn partial_synchrony_after_gst() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = NetworkModel::PartialSynchrony { gst: 50, delta: 3, pre_gst_delay_bound: 100 };
        for _ in 0..500 {
            let d = adversary_delay(&m, &meta(MessageKind::Vote), ReplicaId(0), ReplicaId(1), 60, &mut rng);
            assert!((1..=3).contains(&d));
            let e = adversary_delay(&m, &meta(MessageKind::Vote), ReplicaId(0), ReplicaId(1), 10, &mut rng);
            assert!(10 + e <= 53);
        }
    }

    #[test]
    fn targeted_policy_by_kind() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = DelayPolicy::uniform(DelayRange::fixed(1)).with(MessageKind::Proposal, DelayRange::fixed(10));
        let m = NetworkModel::Asynchronous { policy: p };
        let a = adversary_delay(&m, &meta(MessageKind::Proposal), ReplicaId(0), ReplicaId(1), 0, &mut rng);
        let b = adversary_delay(&m, &meta(MessageKind::Vote), ReplicaId(0), ReplicaId(1), 0, &mut rng);
        assert_eq!((a, b), (10, 1));
        assert_eq!(m.constant_delay(), None);
    }

    #[test]
    fn validation() {
        assert!(NetworkModel::Synchronous { delta: 0 }.validate().is_err());
        let p = DelayPolicy::uniform(DelayRange::new(3, 2));
        assert!(NetworkModel::Asynchronous { policy: p }.validate().is_err());
    }
}
