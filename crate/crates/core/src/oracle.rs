//! Reference solvers, fixed policies and named scenarios.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // unused when std is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Action, Agent, AgentState, LearningParams, QTable, Quantizer, RewardEvent};
use crate::config::{ConfigError, FlowSpec, PolicyKind, ScenarioConfig, TopologySpec, TrafficSpec};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FixedPolicy {
    AlwaysOverhear,
    AlwaysSleep,
    /// Overhear with probability `p`.
    RandomP(f64),
}

impl FixedPolicy {
    pub fn apply(&self, rng: &mut impl Rng) -> Action {
        match *self {
            FixedPolicy::AlwaysOverhear => Action::Overhear,
            FixedPolicy::AlwaysSleep => Action::Sleep,
            FixedPolicy::RandomP(p) => {
                if rng.random_bool(p.clamp(0.0, 1.0)) {
                    Action::Overhear
                } else {
                    Action::Sleep
                }
            }
        }
    }
}

pub fn apply_fixed_policy(policy: FixedPolicy, rng: &mut impl Rng) -> Action {
    policy.apply(rng)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("transition row ({0}, {1}) sums to {2}, not 1")]
    BadRow(usize, usize, f64),
    #[error("sojourn time for ({0}, {1}) must be positive")]
    BadSojourn(usize, usize),
    #[error("shape mismatch: {0}")]
    Shape(&'static str),
    #[error("value iteration did not converge in {0} sweeps")]
    NoConvergence(usize),
    #[error("gamma must be positive")]
    BadGamma,
}

/// When a decision's reward reaches the learner, in epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RewardDelay {
    Fixed(usize),
    /// Poisson-distributed with this mean.
    Poisson(f64),
}

/// A small semi-Markov decision process given explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSmdp {
    /// `transitions[s][a][s2]`.
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// `sojourn[s][a]`, time until the next epoch.
    pub sojourn: Vec<Vec<f64>>,
    /// `reward[s][a]`.
    pub reward: Vec<Vec<f64>>,
    pub delay: RewardDelay,
}

impl SyntheticSmdp {
    pub fn states(&self) -> usize {
        self.reward.len()
    }

    pub fn actions(&self) -> usize {
        self.reward.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let n = self.states();
        let m = self.actions();
        if n == 0 || m == 0 {
            return Err(OracleError::Shape("need at least one state and one action"));
        }
        if self.transitions.len() != n || self.sojourn.len() != n {
            return Err(OracleError::Shape("per-state tables differ in length"));
        }
        for s in 0..n {
            if self.reward[s].len() != m || self.sojourn[s].len() != m || self.transitions[s].len() != m {
                return Err(OracleError::Shape("per-action tables differ in length"));
            }
            for a in 0..m {
                let row = &self.transitions[s][a];
                if row.len() != n {
                    return Err(OracleError::Shape("transition row length"));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-9 || row.iter().any(|&p| p < 0.0) {
                    return Err(OracleError::BadRow(s, a, sum));
                }
                if !(self.sojourn[s][a] > 0.0) {
                    return Err(OracleError::BadSojourn(s, a));
                }
            }
        }
        Ok(())
    }

    /// Next state drawn from the transition row of `(s, a)`.
    pub fn step(&self, s: usize, a: usize, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let row = &self.transitions[s][a];
        for (next, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return next;
            }
        }
        row.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    /// Random instance with strictly positive transition rows.
    pub fn random(states: usize, actions: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, 0x5A17);
        let mut transitions = vec![vec![Vec::new(); actions]; states];
        let mut sojourn = vec![vec![0.0; actions]; states];
        let mut reward = vec![vec![0.0; actions]; states];
        for s in 0..states {
            for a in 0..actions {
                let raw: Vec<f64> = (0..states).map(|_| rng.random_range(0.1..1.0)).collect();
                let total: f64 = raw.iter().sum();
                transitions[s][a] = raw.iter().map(|p| p / total).collect();
                sojourn[s][a] = rng.random_range(0.5..2.0);
                reward[s][a] = rng.random_range(-1.0..1.0);
            }
        }
        Self {
            transitions,
            sojourn,
            reward,
            delay: RewardDelay::Fixed(0),
        }
    }
}

/// One Bellman sweep: `R(s,a) + sum_s2 P(s2|s,a) exp(-gamma F(s,a)) max_a2 q(s2,a2)`.
pub fn bellman_sweep(m: &SyntheticSmdp, gamma: f64, q: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let best: Vec<f64> = q
        .iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    (0..m.states())
        .map(|s| {
            (0..m.actions())
                .map(|a| {
                    let discount = (-gamma * m.sojourn[s][a]).exp();
                    let future: f64 = m.transitions[s][a]
                        .iter()
                        .zip(&best)
                        .map(|(p, v)| p * v)
                        .sum();
                    m.reward[s][a] + discount * future
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// `q[s][a]`.
    pub q: Vec<Vec<f64>>,
    /// Best action per state, ties to the lower index.
    pub policy: Vec<usize>,
    pub sweeps: usize,
}

pub const MAX_SWEEPS: usize = 1_000_000;

pub fn value_iteration(m: &SyntheticSmdp, gamma: f64, tolerance: f64) -> Result<Solution, OracleError> {
    m.validate()?;
    if !(gamma > 0.0) {
        return Err(OracleError::BadGamma);
    }
    let mut q = vec![vec![0.0; m.actions()]; m.states()];
    for sweep in 1..=MAX_SWEEPS {
        let next = bellman_sweep(m, gamma, &q);
        let change = next
            .iter()
            .flatten()
            .zip(q.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        q = next;
        if change < tolerance {
            let policy = q.iter().map(|row| argmax(row)).collect();
            return Ok(Solution {
                q,
                policy,
                sweeps: sweep,
            });
        }
    }
    Err(OracleError::NoConvergence(MAX_SWEEPS))
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// State `s` of a synthetic instance as seen by the agent.
pub fn synthetic_state(s: usize) -> AgentState {
    AgentState {
        energy: (s + 1) as u8,
        degree: 1,
    }
}

pub fn synthetic_quantizer(m: &SyntheticSmdp) -> Quantizer {
    Quantizer {
        energy_levels: m.states() as u8,
        degree_levels: 1,
        history: 1,
    }
}

/// Trains an agent on a two-action instance for `epochs` decisions. Action
/// index 0 is Overhear, 1 is Sleep. Sojourn times are the epoch gaps and the
/// reward of decision `t` reaches the agent `delay` epochs later.
pub fn train_synthetic(m: &SyntheticSmdp, params: LearningParams, epochs: u64, seed: u64) -> Result<QTable, OracleError> {
    m.validate()?;
    if m.actions() != 2 || m.states() > usize::from(u8::MAX) {
        return Err(OracleError::Shape("the agent needs exactly two actions and at most 255 states"));
    }
    let mut agent = Agent::new(&synthetic_quantizer(m), params);
    let mut rng = stream_rng(seed, 0xA6E7);
    let mut env_rng = stream_rng(seed, 0xE417);
    let poisson = match m.delay {
        RewardDelay::Poisson(mean) if mean > 0.0 => Poisson::new(mean).ok(),
        _ => None,
    };
    // (due epoch, event)
    let mut pending: Vec<(u64, RewardEvent)> = Vec::new();
    let mut s = 0usize;
    let mut now = 0.0;
    for t in 0..epochs {
        let mut due = Vec::new();
        pending.retain(|(at, r)| {
            if *at == t {
                due.push(*r);
                false
            } else {
                true
            }
        });
        let action = agent.on_epoch(synthetic_state(s), now, &due, &mut rng);
        let a = action.index();
        let delay = match (m.delay, &poisson) {
            (RewardDelay::Fixed(d), _) => d as u64,
            (RewardDelay::Poisson(_), Some(p)) => {
                let d: f64 = p.sample(&mut env_rng);
                d as u64
            }
            (RewardDelay::Poisson(_), None) => 0,
        };
        pending.push((
            t + delay + 1,
            RewardEvent {
                amount: m.reward[s][a],
                epoch: t,
                arrival: 0,
            },
        ));
        now += m.sojourn[s][a];
        s = m.step(s, a, &mut env_rng);
    }
    Ok(agent.table().clone())
}

/// Four-state benchmark with a fixed reward delay. In every state the better
/// action also earns the top immediate reward of 1; state 0 separates its two
/// actions only through sojourn time and where they lead.
pub fn delayed_benchmark(delay: usize) -> SyntheticSmdp {
    SyntheticSmdp {
        transitions: vec![
            vec![vec![0.1, 0.6, 0.2, 0.1], vec![0.1, 0.1, 0.2, 0.6]],
            vec![vec![0.3, 0.1, 0.5, 0.1], vec![0.2, 0.2, 0.3, 0.3]],
            vec![vec![0.25, 0.25, 0.25, 0.25], vec![0.5, 0.1, 0.1, 0.3]],
            vec![vec![0.4, 0.3, 0.2, 0.1], vec![0.1, 0.4, 0.4, 0.1]],
        ],
        sojourn: vec![vec![1.0, 2.0], vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]],
        reward: vec![vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]],
        delay: RewardDelay::Fixed(delay),
    }
}

/// Greedy action index per state of a table trained by [`train_synthetic`].
pub fn greedy_policy(table: &QTable, states: usize) -> Vec<usize> {
    (0..states).map(|s| table.greedy(synthetic_state(s)).0.index()).collect()
}

pub const SCENARIOS: [&str; 4] = ["chain-fig1", "two-way-relay", "bystander-cross", "desk"];

/// Node ids in the small scenarios.
pub mod ids {
    pub const N1: u32 = 0;
    pub const N2: u32 = 1;
    pub const N3: u32 = 2;
    pub const RELAY: u32 = 3;
    pub const N4: u32 = 4;
    pub const A: u32 = 0;
    pub const B: u32 = 2;
    pub const RELAY_AB: u32 = 1;
}

const RADIUS: f64 = 200.0;

fn polar(r: f64, degrees: f64) -> [f64; 2] {
    let rad = degrees.to_radians();
    [r * rad.cos(), r * rad.sin()]
}

/// Named scenarios. The small explicit topologies send one packet per flow at
/// slot 0; [`steady_variant`] turns them into long-running traffic. Links are
/// 0.75 of the radio range so adjacency never sits on the boundary.
pub fn canonical_scenario(name: &str) -> Result<ScenarioConfig, ConfigError> {
    if name == "desk" {
        return Ok(desk_scenario(4));
    }
    let l = 0.75 * RADIUS;
    let (positions, flows): (Vec<[f64; 2]>, Vec<(u32, u32)>) = match name {
        "chain-fig1" | "bystander-cross" => {
            let mut p = vec![polar(l, 150.0), polar(l, 0.0), polar(l, 210.0), [0.0, 0.0]];
            if name == "bystander-cross" {
                p.push(polar(2.0 * l, 150.0));
            }
            (p, vec![(ids::N1, ids::N2), (ids::N2, ids::N3)])
        }
        "two-way-relay" => (vec![[-l, 0.0], [0.0, 0.0], [l, 0.0]], vec![(ids::A, ids::B), (ids::B, ids::A)]),
        other => return Err(ConfigError::UnknownScenario(String::from(other))),
    };
    Ok(single_packet_variant(ScenarioConfig {
        name: String::from(name),
        duration: 30_000,
        repetitions: 1,
        policy: PolicyKind::Learned,
        topology: TopologySpec::Explicit {
            radius: RADIUS,
            positions,
        },
        traffic: TrafficSpec {
            flows: flows
                .into_iter()
                .map(|(source, destination)| FlowSpec {
                    source,
                    destination,
                    mean_gap: None,
                    start: None,
                    end: None,
                })
                .collect(),
            flow_count: 0,
            mean_gap: 10.0,
            ..TrafficSpec::default()
        },
        ..ScenarioConfig::default()
    }))
}

/// Thirty random nodes in a square sized for the radio range, `flows` random
/// flows, long enough for most busy nodes to see several thousand epochs.
pub fn desk_scenario(flows: usize) -> ScenarioConfig {
    let mut c = ScenarioConfig {
        name: String::from("desk"),
        duration: 40_000,
        ..ScenarioConfig::default()
    };
    c.traffic.flow_count = flows;
    c.energy.capacity = 1e-2;
    c
}

/// A scenario where every flow sends exactly one packet at slot 0.
pub fn single_packet_variant(mut config: ScenarioConfig) -> ScenarioConfig {
    for f in &mut config.traffic.flows {
        f.start = Some(0);
        f.end = Some(0);
    }
    config.duration = 50;
    config
}

/// Long-running chain traffic where the relay almost always holds a partner
/// for the n1 packet: n2 sends five times as often as n1, and relayed packets
/// wait long enough for n3's report to arrive first.
pub fn steady_variant(mut config: ScenarioConfig) -> ScenarioConfig {
    let gaps = [20.0, 4.0];
    for (f, gap) in config.traffic.flows.iter_mut().zip(gaps) {
        f.mean_gap = Some(gap);
        f.start = None;
        f.end = None;
    }
    config.mac.relay_hold = 12;
    config.coding.report_period = 2;
    config.duration = 100_000;
    config.energy.capacity = 1e-2;
    config
}
