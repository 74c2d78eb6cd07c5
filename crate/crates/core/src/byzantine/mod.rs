//! Faulty-node strategies, scheduler policies and interactive-consistency
//! hooks, selectable by name.

mod policies;
mod strategies;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::NodeId;
use crate::protocols::IcAdversaryHook;
use crate::rng::SimRng;
use crate::simnet::{Adversary, AdversaryMemory, FaultStrategy, SchedulerPolicy};

pub use policies::{AdaptiveSplitter, Fifo, LifoPerInstance, RandomOrder, TargetedStarvation};
pub use strategies::{Colluder, Equivocator, RandomNoise, Ready2Forcer, Silent};

macro_rules! named_kinds {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let wanted = s.replace('-', "_");
                $name::ALL
                    .iter()
                    .copied()
                    .find(|k| k.name() == wanted)
                    .ok_or_else(|| {
                        let names: Vec<_> = $name::ALL.iter().map(|k| k.name()).collect();
                        format!("unknown {} `{s}` (expected one of: {})", stringify!($name), names.join(", "))
                    })
            }
        }
    };
}

named_kinds! {
    StrategyKind {
        Silent => "silent",
        RandomNoise => "random_noise",
        Equivocator => "equivocator",
        Ready2Forcer => "ready2_forcer",
        Colluder => "colluder",
    }
}

named_kinds! {
    PolicyKind {
        Fifo => "fifo",
        Random => "random",
        LifoPerInstance => "lifo_per_instance",
        TargetedStarvation => "targeted_starvation",
        AdaptiveSplitter => "adaptive_splitter",
    }
}

/// Tunables of the built-in adversaries. Distances are multiples of δ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdversaryParams {
    /// Angle (radians) over which an equivocating sender fans its inits.
    pub spread: f64,
    /// Chord offset of an equivocator's relayed echoes and readies.
    pub relay_offset_deltas: f64,
    /// Chord distance between the two colluder candidates.
    pub separation_deltas: f64,
    /// Per-step emission probability of random noise.
    pub noise_rate: f64,
    /// Probability that the random scheduler drops a faulty-origin envelope.
    pub drop_probability: f64,
    /// Node whose inits are starved; defaults to the highest correct id.
    pub starvation_target: Option<NodeId>,
}

impl Default for AdversaryParams {
    fn default() -> Self {
        AdversaryParams {
            spread: std::f64::consts::FRAC_PI_2,
            relay_offset_deltas: 3.0,
            separation_deltas: 6.0,
            noise_rate: 0.25,
            drop_probability: 0.05,
            starvation_target: None,
        }
    }
}

pub fn make_strategy(kind: StrategyKind, params: &AdversaryParams) -> Box<dyn FaultStrategy> {
    match kind {
        StrategyKind::Silent => Box::new(Silent),
        StrategyKind::RandomNoise => Box::new(RandomNoise::new(params.noise_rate)),
        StrategyKind::Equivocator => Box::new(Equivocator::new(params.spread, params.relay_offset_deltas)),
        StrategyKind::Ready2Forcer => Box::new(Ready2Forcer::default()),
        StrategyKind::Colluder => Box::new(Colluder::new(params.separation_deltas)),
    }
}

pub fn make_policy(kind: PolicyKind, params: &AdversaryParams) -> Box<dyn SchedulerPolicy> {
    match kind {
        PolicyKind::Fifo => Box::new(Fifo),
        PolicyKind::Random => Box::new(RandomOrder::new(params.drop_probability)),
        PolicyKind::LifoPerInstance => Box::new(LifoPerInstance::default()),
        PolicyKind::TargetedStarvation => Box::new(TargetedStarvation::new(params.starvation_target)),
        PolicyKind::AdaptiveSplitter => Box::new(AdaptiveSplitter::default()),
    }
}

/// Every faulty node runs `strategy`; all share one memory with the scheduler.
pub fn make_adversary(strategy: StrategyKind, policy: PolicyKind, faulty: &[NodeId], params: &AdversaryParams) -> Adversary {
    Adversary {
        strategies: faulty.iter().map(|&id| (id, make_strategy(strategy, params))).collect(),
        policy: make_policy(policy, params),
        memory: AdversaryMemory::default(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultyRows {
    Zeros,
    Ones,
    Random,
}

/// Interactive-consistency adversary: chooses faulty rows and, in core-set
/// mode, blanks the correct rows that back the lowest columns.
#[derive(Debug, Clone)]
pub struct IcHook {
    rows: FaultyRows,
    rng: SimRng,
}

impl IcHook {
    pub fn new(rows: FaultyRows, rng: SimRng) -> Self {
        IcHook { rows, rng }
    }

    /// Row choice matching a strategy's intent.
    pub fn for_strategy(kind: StrategyKind, rng: SimRng) -> Self {
        let rows = match kind {
            StrategyKind::Silent => FaultyRows::Zeros,
            StrategyKind::RandomNoise => FaultyRows::Random,
            StrategyKind::Equivocator | StrategyKind::Ready2Forcer | StrategyKind::Colluder => FaultyRows::Ones,
        };
        IcHook::new(rows, rng)
    }
}

impl IcAdversaryHook for IcHook {
    fn faulty_row(&mut self, _node: NodeId, n: usize, _correct: &BTreeMap<NodeId, Vec<bool>>) -> Vec<bool> {
        match self.rows {
            FaultyRows::Zeros => vec![false; n],
            FaultyRows::Ones => vec![true; n],
            FaultyRows::Random => (0..n).map(|_| self.rng.random::<bool>()).collect(),
        }
    }

    fn drop_set(&mut self, correct: &BTreeMap<NodeId, Vec<bool>>, t: usize) -> Vec<NodeId> {
        let mut ranked: Vec<(&Vec<bool>, NodeId)> = correct.iter().map(|(&id, row)| (row, id)).collect();
        // Rows with ones in the lowest columns first.
        ranked.sort_by(|a, b| b.0.cmp(a.0).then(a.1.cmp(&b.1)));
        ranked.into_iter().take(t).map(|(_, id)| id).collect()
    }

    fn clone_box(&self) -> Box<dyn IcAdversaryHook> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    #[test]
    fn kinds_parse_by_name() {
        for &k in StrategyKind::ALL {
            assert_eq!(k.name().parse::<StrategyKind>(), Ok(k));
        }
        for &k in PolicyKind::ALL {
            assert_eq!(k.name().parse::<PolicyKind>(), Ok(k));
        }
        assert_eq!("adaptive-splitter".parse::<PolicyKind>(), Ok(PolicyKind::AdaptiveSplitter));
        assert!("nope".parse::<StrategyKind>().is_err());
    }

    #[test]
    fn hook_blanks_rows_backing_low_columns() {
        let correct: BTreeMap<_, _> = [
            (0, vec![false, true, true]),
            (1, vec![true, false, true]),
            (2, vec![true, true, false]),
        ]
        .into();
        let mut h = IcHook::new(FaultyRows::Zeros, stream(0, 0, Purpose::Adversary));
        assert_eq!(h.drop_set(&correct, 2), vec![2, 1]);
    }
}
