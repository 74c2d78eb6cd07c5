use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::byzantine::{AdversaryParams, PolicyKind, StrategyKind};
use crate::geometry::NodeId;
use crate::protocols::IcMode;
use crate::simnet::{Mode, DEFAULT_FAIRNESS_BOUND};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("configuration error: {0}")]
pub struct ConfigError(pub String);

/// Which node ids are faulty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Nodes `0..t`; in broadcast runs this makes the sender faulty.
    Low,
    /// Nodes `n−t..n`.
    High,
}

impl std::str::FromStr for Placement {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "low" => Ok(Placement::Low),
            "high" => Ok(Placement::High),
            _ => Err(format!("unknown placement `{s}` (expected low or high)")),
        }
    }
}

/// Where node inputs come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// Each node's own +z axis, so inputs differ as much as the frames do.
    LocalZ,
    /// Uniformly random local directions.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub n: usize,
    pub t: usize,
    pub delta: f64,
    pub qubits_per_axis: u64,
    pub ideal_channel: bool,
    pub ic_mode: IcMode,
    pub fault_strategy: StrategyKind,
    pub scheduler: PolicyKind,
    pub adversary: AdversaryParams,
    pub trials: u64,
    pub master_seed: u64,
    pub max_events: u64,
    pub fairness_bound: u64,
    pub allow_excess_faults: bool,
    pub faulty_placement: Placement,
    /// Designated sender of broadcast runs.
    pub sender: NodeId,
    pub inputs: InputMode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::Agree,
            n: 9,
            t: 2,
            delta: 0.02,
            qubits_per_axis: 20_000,
            ideal_channel: false,
            ic_mode: IcMode::Strict,
            fault_strategy: StrategyKind::Silent,
            scheduler: PolicyKind::Fifo,
            adversary: AdversaryParams::default(),
            trials: 1,
            master_seed: 0,
            max_events: 1_000_000,
            fairness_bound: DEFAULT_FAIRNESS_BOUND,
            allow_excess_faults: false,
            faulty_placement: Placement::High,
            sender: 0,
            inputs: InputMode::LocalZ,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// More faults than the protocols tolerate: bounds are recorded, not asserted.
    pub fn violation_study(&self) -> bool {
        4 * self.t >= self.n
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError(m));
        if self.n < 4 {
            return err(format!("n must be at least 4, got {}", self.n));
        }
        if self.n > crate::simnet::MAX_NODES {
            return err(format!("n must be at most {}, got {}", crate::simnet::MAX_NODES, self.n));
        }
        if self.t >= self.n {
            return err(format!("t = {} leaves no correct node among n = {}", self.t, self.n));
        }
        if self.violation_study() && !self.allow_excess_faults {
            return err(format!(
                "t < n/4 requires t <= {} for n = {} (got t = {}); pass allow_excess_faults for violation studies",
                (self.n - 1) / 4,
                self.n,
                self.t
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return err(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.qubits_per_axis == 0 {
            return err("qubits_per_axis must be at least 1".into());
        }
        if self.trials == 0 {
            return err("trials must be at least 1".into());
        }
        if self.max_events == 0 || self.fairness_bound == 0 {
            return err("max_events and fairness_bound must be positive".into());
        }
        if self.sender >= self.n {
            return err(format!("sender {} is not a node id below n = {}", self.sender, self.n));
        }
        Ok(())
    }

    pub fn faulty_nodes(&self) -> Vec<NodeId> {
        match self.faulty_placement {
            Placement::Low => (0..self.t).collect(),
            Placement::High => (self.n - self.t..self.n).collect(),
        }
    }
}
