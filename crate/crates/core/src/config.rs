//! Scenario description: what to simulate and with which knobs.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{LearningParams, Quantizer};
use crate::mac::EnergyModel;
use crate::oracle::FixedPolicy;
use crate::Slot;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("unknown policy `{0}` (expected learned, always-overhear, always-sleep or random:P)")]
    UnknownPolicy(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error(transparent)]
    World(#[from] crate::world::WorldError),
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        reason: reason.into(),
    }
}

/// Who decides at overhearing opportunities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PolicyKind {
    Learned,
    Fixed(FixedPolicy),
}

impl PolicyKind {
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::Learned => f.write_str("learned"),
            PolicyKind::Fixed(FixedPolicy::AlwaysOverhear) => f.write_str("always-overhear"),
            PolicyKind::Fixed(FixedPolicy::AlwaysSleep) => f.write_str("always-sleep"),
            PolicyKind::Fixed(FixedPolicy::RandomP(p)) => write!(f, "random:{p}"),
        }
    }
}

impl FromStr for PolicyKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "learned" => return Ok(PolicyKind::Learned),
            "always-overhear" | "cope" => return Ok(PolicyKind::Fixed(FixedPolicy::AlwaysOverhear)),
            "always-sleep" => return Ok(PolicyKind::Fixed(FixedPolicy::AlwaysSleep)),
            _ => {}
        }
        if let Some(p) = s.strip_prefix("random:") {
            let p: f64 = p.parse().map_err(|_| ConfigError::UnknownPolicy(s.into()))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid("policy", "random:P needs P in [0, 1]"));
            }
            return Ok(PolicyKind::Fixed(FixedPolicy::RandomP(p)));
        }
        Err(ConfigError::UnknownPolicy(s.into()))
    }
}

impl TryFrom<String> for PolicyKind {
    type Error = ConfigError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<PolicyKind> for String {
    fn from(p: PolicyKind) -> String {
        p.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TopologySpec {
    Random {
        nodes: usize,
        width: f64,
        height: f64,
        radius: f64,
    },
    Explicit {
        radius: f64,
        positions: Vec<[f64; 2]>,
    },
}

impl Default for TopologySpec {
    fn default() -> Self {
        TopologySpec::Random {
            nodes: 30,
            width: 790.0,
            height: 790.0,
            radius: 200.0,
        }
    }
}

impl TopologySpec {
    pub fn node_count(&self) -> usize {
        match self {
            TopologySpec::Random { nodes, .. } => *nodes,
            TopologySpec::Explicit { positions, .. } => positions.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub source: u32,
    pub destination: u32,
    /// Falls back to the traffic section's mean gap.
    #[serde(default)]
    pub mean_gap: Option<f64>,
    #[serde(default)]
    pub start: Option<Slot>,
    #[serde(default)]
    pub end: Option<Slot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficSpec {
    /// Explicit flows. When empty, `flow_count` random pairs are drawn.
    pub flows: Vec<FlowSpec>,
    pub flow_count: usize,
    pub packet_bytes: u32,
    /// Mean inter-arrival time in slots.
    pub mean_gap: f64,
    pub start: Slot,
    /// Last slot with arrivals; `None` means the end of the run.
    pub end: Option<Slot>,
}

impl Default for TrafficSpec {
    fn default() -> Self {
        Self {
            flows: Vec::new(),
            flow_count: 4,
            packet_bytes: 500,
            mean_gap: 20.0,
            start: 0,
            end: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnowledgeMode {
    /// Learned from reception reports.
    Reports,
    /// Every node sees its neighbors' holdings directly.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodingParams {
    /// Usefulness deadline in slots.
    pub alpha: Slot,
    pub pool_capacity: usize,
    /// Minimum slots between standalone reception reports.
    pub report_period: Slot,
    pub knowledge: KnowledgeMode,
}

impl Default for CodingParams {
    fn default() -> Self {
        Self {
            alpha: 50,
            pool_capacity: 64,
            report_period: 5,
            knowledge: KnowledgeMode::Reports,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacParams {
    /// Slots a relayed packet waits before it may head a transmission.
    pub relay_hold: Slot,
    pub queue_capacity: usize,
}

impl Default for MacParams {
    fn default() -> Self {
        Self {
            relay_hold: 2,
            queue_capacity: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<String>,
    pub trace: bool,
    pub dump_qtable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub duration: Slot,
    pub seed: u64,
    pub repetitions: usize,
    pub policy: PolicyKind,
    pub topology: TopologySpec,
    pub traffic: TrafficSpec,
    pub energy: EnergyModel,
    pub coding: CodingParams,
    pub mac: MacParams,
    pub state: Quantizer,
    pub learning: LearningParams,
    pub output: OutputSpec,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "random".into(),
            duration: 20_000,
            seed: 1,
            repetitions: 20,
            policy: PolicyKind::Learned,
            topology: TopologySpec::default(),
            traffic: TrafficSpec::default(),
            energy: EnergyModel::default(),
            coding: CodingParams::default(),
            mac: MacParams::default(),
            state: Quantizer::default(),
            learning: LearningParams::default(),
            output: OutputSpec::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.duration == 0 {
            return Err(invalid("duration", "must be at least one slot"));
        }
        match &self.topology {
            TopologySpec::Random {
                nodes,
                width,
                height,
                radius,
            } => {
                if *nodes == 0 {
                    return Err(invalid("topology.nodes", "need at least one node"));
                }
                if !(*width > 0.0 && *height > 0.0) {
                    return Err(invalid("topology.width", "area must be positive"));
                }
                if !(*radius > 0.0) {
                    return Err(invalid("topology.radius", "must be positive"));
                }
            }
            TopologySpec::Explicit { radius, positions } => {
                if positions.is_empty() {
                    return Err(invalid("topology.positions", "need at least one node"));
                }
                if !(*radius > 0.0) {
                    return Err(invalid("topology.radius", "must be positive"));
                }
            }
        }
        let n = self.topology.node_count();
        let t = &self.traffic;
        if t.packet_bytes == 0 {
            return Err(invalid("traffic.packet_bytes", "must be positive"));
        }
        if !(t.mean_gap > 0.0) {
            return Err(invalid("traffic.mean_gap", "must be positive"));
        }
        for f in &t.flows {
            if f.source as usize >= n || f.destination as usize >= n {
                return Err(invalid("traffic.flows", format!("flow {}->{} names a missing node", f.source, f.destination)));
            }
            if f.source == f.destination {
                return Err(invalid("traffic.flows", "source equals destination"));
            }
            if let Some(g) = f.mean_gap {
                if !(g > 0.0) {
                    return Err(invalid("traffic.flows", "mean_gap must be positive"));
                }
            }
        }
        if t.flows.is_empty() && t.flow_count > 0 && n < 2 {
            return Err(invalid("traffic.flow_count", "random flows need two nodes"));
        }
        self.energy.validate()?;
        if self.coding.alpha < 1 {
            return Err(invalid("coding.alpha", "must be at least 1"));
        }
        if self.coding.pool_capacity == 0 {
            return Err(invalid("coding.pool_capacity", "must be positive"));
        }
        if self.coding.report_period == 0 {
            return Err(invalid("coding.report_period", "must be positive"));
        }
        if self.mac.queue_capacity == 0 {
            return Err(invalid("mac.queue_capacity", "must be positive"));
        }
        if self.state.energy_levels == 0 || self.state.degree_levels == 0 || self.state.history == 0 {
            return Err(invalid("state", "levels and history must be positive"));
        }
        self.learning
            .validate()
            .map_err(|e| invalid("learning", e.to_string()))?;
        if let PolicyKind::Fixed(FixedPolicy::RandomP(p)) = self.policy {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid("policy", "random:P needs P in [0, 1]"));
            }
        }
        Ok(())
    }

    /// Number of flows this config will run with.
    pub fn flow_count(&self) -> usize {
        if self.traffic.flows.is_empty() {
            self.traffic.flow_count
        } else {
            self.traffic.flows.len()
        }
    }
}
