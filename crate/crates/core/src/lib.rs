//! Simulation core for coding-aware sleep scheduling in slotted multi-hop
//! wireless networks.
//!
//! Every node forwards unicast traffic with two-hop XOR inter-flow coding and
//! runs a small semi-Markov decision agent that decides, at each overhearing
//! opportunity, whether to keep the radio on or to sleep. Revenue for an
//! overheard packet only shows up when a neighbor later codes with it, so the
//! agent carries an extra delay-estimate dimension in its Q-table.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, CSV and the command
//! line live in the `codesleep` crate.
//!
//! Module map:
//!
//! - [`world`]: positions, unit-disk neighbors, greedy geographic routing,
//!   traffic arrivals, expected gap between overhearing opportunities.
//! - [`mac`]: the per-slot engine (scheduling, delivery, energy, node state).
//! - [`coding`]: native/coded frames, XOR coding, overheard pools, reception
//!   reports and neighbor knowledge.
//! - [`agent`]: state quantization, the delay-extended Q-table and its update.
//! - [`oracle`]: value iteration on synthetic SMDPs, fixed policies and the
//!   canonical small scenarios.
//! - [`metrics`]: coding gain, energy per bit, delay, reward curves, lifetime.
//! - [`config`]: the scenario description consumed by [`mac::run`].

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod agent;
pub mod coding;
pub mod config;
pub mod mac;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod world;

pub use agent::{Action, Agent, AgentState, QTable};
pub use config::{PolicyKind, ScenarioConfig};
pub use mac::{run, Simulation};
pub use metrics::MetricsReport;
pub use world::{NodeId, Topology};

/// Slot index. One slot carries exactly one packet transmission.
pub type Slot = u64;
