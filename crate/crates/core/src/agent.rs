//! Per-node sleep/overhear decision maker.
//!
//! The agent observes a quantized (residual energy, recent coding degree)
//! state at every overhearing opportunity and picks Overhear or Sleep. Its
//! Q-table has a third axis, the delay estimate: `value[s][a][d]` is the value
//! of taking `a` in `s` under the hypothesis that its reward shows up `d`
//! epochs later. Each epoch the summed reward collected since the previous
//! epoch is credited, for every `d`, to the decision made `d` epochs ago,
//! with continuous-time discounting `exp(-gamma * elapsed)`.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

#[allow(unused_imports)] // unused when std is linked
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Slot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    Overhear = 0,
    Sleep = 1,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Overhear, Action::Sleep];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        if i == 0 {
            Action::Overhear
        } else {
            Action::Sleep
        }
    }
}

/// Quantized observation. Both levels start at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentState {
    pub energy: u8,
    pub degree: u8,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("elapsed time must be non-negative, got {0}")]
    NegativeInterval(f64),
    #[error("invalid learning parameter: {0}")]
    InvalidParameter(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Quantizer {
    pub energy_levels: u8,
    pub degree_levels: u8,
    /// How many recent coding degrees are averaged.
    pub history: usize,
}

impl Default for Quantizer {
    fn default() -> Self {
        Self {
            energy_levels: 8,
            degree_levels: 10,
            history: 15,
        }
    }
}

impl Quantizer {
    pub fn state_count(&self) -> usize {
        usize::from(self.energy_levels) * usize::from(self.degree_levels)
    }

    /// `ceil(levels * residual / capacity)`, clamped to `1..=levels`.
    pub fn energy_level(&self, residual: f64, capacity: f64) -> u8 {
        let levels = f64::from(self.energy_levels);
        let raw = (levels * residual / capacity).ceil();
        raw.clamp(1.0, levels) as u8
    }

    /// Uniform bins over `[1, 2]`: `(1 + (k-1)/L, 1 + k/L]` maps to `k`,
    /// exactly 1.0 (or no samples) to 1, anything at or above 2.0 to `L`.
    pub fn degree_level(&self, mean: Option<f64>) -> u8 {
        let levels = f64::from(self.degree_levels);
        let Some(mean) = mean else { return 1 };
        if mean >= 2.0 {
            return self.degree_levels;
        }
        // bin edges like 1.1 are not exact in binary
        let raw = ((mean - 1.0) * levels - 1e-9).ceil();
        raw.clamp(1.0, levels) as u8
    }
}

/// Ring of the last `c` coding degrees seen by a node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeHistory {
    ring: VecDeque<u8>,
    capacity: usize,
}

impl DegreeHistory {
    pub fn new(capacity: usize) -> Self {
        Self {
            ring: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
        }
    }

    pub fn push(&mut self, degree: usize) {
        if self.ring.len() == self.capacity {
            self.ring.pop_front();
        }
        self.ring.push_back(degree.min(u8::MAX as usize) as u8);
    }

    pub fn mean(&self) -> Option<f64> {
        if self.ring.is_empty() {
            return None;
        }
        let sum: u32 = self.ring.iter().map(|&d| u32::from(d)).sum();
        Some(f64::from(sum) / self.ring.len() as f64)
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }
}

pub fn observe_state(residual: f64, capacity: f64, degrees: &DegreeHistory, quantizer: &Quantizer) -> AgentState {
    AgentState {
        energy: quantizer.energy_level(residual, capacity),
        degree: quantizer.degree_level(degrees.mean()),
    }
}

/// Dense `state x action x delay-estimate` value table, zero-initialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    energy_levels: u8,
    degree_levels: u8,
    theta_max: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(energy_levels: u8, degree_levels: u8, theta_max: usize) -> Self {
        let energy_levels = energy_levels.max(1);
        let degree_levels = degree_levels.max(1);
        let len = usize::from(energy_levels) * usize::from(degree_levels) * 2 * (theta_max + 1);
        Self {
            energy_levels,
            degree_levels,
            theta_max,
            values: alloc::vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn theta_max(&self) -> usize {
        self.theta_max
    }

    pub fn state_count(&self) -> usize {
        usize::from(self.energy_levels) * usize::from(self.degree_levels)
    }

    pub fn states(&self) -> impl Iterator<Item = AgentState> + '_ {
        (1..=self.energy_levels)
            .flat_map(move |energy| (1..=self.degree_levels).map(move |degree| AgentState { energy, degree }))
    }

    fn index(&self, s: AgentState, a: Action, theta: usize) -> usize {
        debug_assert!(s.energy >= 1 && s.energy <= self.energy_levels);
        debug_assert!(s.degree >= 1 && s.degree <= self.degree_levels);
        debug_assert!(theta <= self.theta_max);
        let state = usize::from(s.energy - 1) * usize::from(self.degree_levels) + usize::from(s.degree - 1);
        (state * 2 + a.index()) * (self.theta_max + 1) + theta
    }

    pub fn get(&self, s: AgentState, a: Action, theta: usize) -> f64 {
        self.values[self.index(s, a, theta)]
    }

    pub fn set(&mut self, s: AgentState, a: Action, theta: usize, value: f64) {
        let i = self.index(s, a, theta);
        self.values[i] = value;
    }

    /// Largest value over all actions and delay estimates of `s`.
    pub fn max_value(&self, s: AgentState) -> f64 {
        let start = self.index(s, Action::Overhear, 0);
        self.values[start..start + 2 * (self.theta_max + 1)]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy choice: the best delay estimate over both actions (ties to the
    /// smaller estimate, then Overhear), then the best action in that slice
    /// (ties to Overhear).
    pub fn greedy(&self, s: AgentState) -> (Action, usize) {
        let mut best = (f64::NEG_INFINITY, usize::MAX, Action::Overhear);
        for theta in 0..=self.theta_max {
            for a in Action::ALL {
                let v = self.get(s, a, theta);
                if v > best.0 {
                    best = (v, theta, a);
                }
            }
        }
        let theta = best.1;
        let action = if self.get(s, Action::Sleep, theta) > self.get(s, Action::Overhear, theta) {
            Action::Sleep
        } else {
            Action::Overhear
        };
        (action, theta)
    }

    /// `argmax_d value[s][a][d]`, ties to the smaller estimate.
    pub fn best_delay(&self, s: AgentState, a: Action) -> usize {
        let mut best = (f64::NEG_INFINITY, 0);
        for theta in 0..=self.theta_max {
            let v = self.get(s, a, theta);
            if v > best.0 {
                best = (v, theta);
            }
        }
        best.1
    }

    /// Every entry as `(state, action, delay estimate, value)`.
    pub fn rows(&self) -> impl Iterator<Item = (AgentState, Action, usize, f64)> + '_ {
        self.states().flat_map(move |s| {
            Action::ALL
                .into_iter()
                .flat_map(move |a| (0..=self.theta_max).map(move |t| (s, a, t, self.get(s, a, t))))
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Epsilon-greedy over [`QTable::greedy`]. Exploration replaces the action
/// only; the delay estimate stays the greedy one.
pub fn select(table: &QTable, s: AgentState, epsilon: f64, rng: &mut impl Rng) -> (Action, usize) {
    let (action, theta) = table.greedy(s);
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        let action = if rng.random::<bool>() { Action::Sleep } else { Action::Overhear };
        return (action, theta);
    }
    (action, theta)
}

/// `exp(-gamma * (late - early))`.
pub fn elapsed_discount(late: f64, early: f64, gamma: f64) -> Result<f64, AgentError> {
    let dt = late - early;
    if !(dt >= 0.0) {
        return Err(AgentError::NegativeInterval(dt));
    }
    Ok((-gamma * dt).exp())
}

/// Reward known at decision time: sleeping costs and earns nothing,
/// overhearing costs the reception energy up front. Revenue for an overheard
/// packet arrives later, one transmission energy per coded frame it joins.
pub fn compose_reward(action: Action, receive_energy: f64) -> f64 {
    match action {
        Action::Sleep => 0.0,
        Action::Overhear => -receive_energy,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardEvent {
    pub amount: f64,
    /// Epoch whose decision earned this reward.
    pub epoch: u64,
    pub arrival: Slot,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionRecord {
    pub epoch: u64,
    pub state: AgentState,
    pub action: Action,
    /// Decision time, in slots.
    pub at: f64,
    /// False once the reward window for this decision has closed.
    pub open: bool,
}

/// Linear epsilon decay from `start` to `end` over `horizon` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exploration {
    pub start: f64,
    pub end: f64,
    pub horizon: u64,
}

impl Default for Exploration {
    fn default() -> Self {
        Self {
            start: 0.3,
            end: 0.02,
            horizon: 4000,
        }
    }
}

impl Exploration {
    pub fn none() -> Self {
        Self {
            start: 0.0,
            end: 0.0,
            horizon: 0,
        }
    }

    pub fn epsilon(&self, epoch: u64) -> f64 {
        if epoch >= self.horizon {
            return self.end;
        }
        let frac = epoch as f64 / self.horizon as f64;
        self.start + (self.end - self.start) * frac
    }
}

/// Unit that elapsed slots are divided by before discounting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeUnit {
    /// A fixed number of slots.
    Slots(f64),
    /// The running mean gap between this agent's epochs.
    MeanEpochGap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningParams {
    pub beta: f64,
    pub gamma: f64,
    pub theta_max: usize,
    pub exploration: Exploration,
    pub time_unit: TimeUnit,
}

impl Default for LearningParams {
    fn default() -> Self {
        Self {
            beta: 0.5,
            gamma: 0.9,
            theta_max: 8,
            exploration: Exploration::default(),
            time_unit: TimeUnit::MeanEpochGap,
        }
    }
}

impl LearningParams {
    pub fn validate(&self) -> Result<(), AgentError> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(AgentError::InvalidParameter("beta must be in (0, 1]"));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(AgentError::InvalidParameter("gamma must be positive"));
        }
        let e = &self.exploration;
        if !(0.0..=1.0).contains(&e.start) || !(0.0..=1.0).contains(&e.end) {
            return Err(AgentError::InvalidParameter("exploration rates must be in [0, 1]"));
        }
        if let TimeUnit::Slots(u) = self.time_unit {
            if !(u > 0.0) {
                return Err(AgentError::InvalidParameter("time unit must be positive"));
            }
        }
        Ok(())
    }
}

/// A learner with its table and its recent decisions.
#[derive(Debug, Clone)]
pub struct Agent {
    table: QTable,
    params: LearningParams,
    records: VecDeque<DecisionRecord>,
    epochs: u64,
    gap_total: f64,
    gaps: u64,
}

impl Agent {
    pub fn new(quantizer: &Quantizer, params: LearningParams) -> Self {
        Self::with_table(QTable::new(quantizer.energy_levels, quantizer.degree_levels, params.theta_max), params)
    }

    pub fn with_table(table: QTable, params: LearningParams) -> Self {
        debug_assert_eq!(table.theta_max(), params.theta_max);
        Self {
            table,
            params,
            records: VecDeque::with_capacity(params.theta_max + 1),
            epochs: 0,
            gap_total: 0.0,
            gaps: 0,
        }
    }

    pub fn table(&self) -> &QTable {
        &self.table
    }

    pub fn params(&self) -> &LearningParams {
        &self.params
    }

    /// Number of epochs seen so far; also the index the next epoch gets.
    pub fn epochs(&self) -> u64 {
        self.epochs
    }

    pub fn records(&self) -> impl Iterator<Item = &DecisionRecord> {
        self.records.iter()
    }

    pub fn epsilon(&self) -> f64 {
        self.params.exploration.epsilon(self.epochs)
    }

    /// Marks a decision's reward window as closed, if it is still remembered.
    pub fn close(&mut self, epoch: u64) {
        if let Some(r) = self.records.iter_mut().find(|r| r.epoch == epoch) {
            r.open = false;
        }
    }

    fn time_unit(&self) -> f64 {
        match self.params.time_unit {
            TimeUnit::Slots(u) => u,
            TimeUnit::MeanEpochGap if self.gaps > 0 => self.gap_total / self.gaps as f64,
            TimeUnit::MeanEpochGap => 1.0,
        }
    }

    /// Credits the rewards collected since the previous epoch and returns the
    /// updated table entries' count. `state` and `at` describe the epoch that
    /// is starting now.
    pub fn learn(&mut self, state: AgentState, at: f64, rewards: &[RewardEvent]) -> usize {
        if let Some(last) = self.records.back() {
            let gap = at - last.at;
            if gap > 0.0 {
                self.gap_total += gap;
                self.gaps += 1;
            }
        }
        let unit = self.time_unit();
        let total: f64 = rewards.iter().map(|r| r.amount).sum();
        let beta = self.params.beta;
        let gamma = self.params.gamma;
        let n = self.records.len();
        if n == 0 {
            return 0;
        }
        let mut updated = 0;
        for theta in 0..=self.params.theta_max.min(n - 1) {
            let record = self.records[n - 1 - theta];
            let (next_state, next_at) = if theta == 0 {
                (state, at)
            } else {
                let next = &self.records[n - theta];
                (next.state, next.at)
            };
            let discount = elapsed_discount(next_at / unit, record.at / unit, gamma).unwrap_or(1.0);
            let old = self.table.get(record.state, record.action, theta);
            let target = total + discount * self.table.max_value(next_state);
            self.table
                .set(record.state, record.action, theta, old + beta * (target - old));
            updated += 1;
        }
        updated
    }

    /// Records the decision for the epoch that is starting now.
    pub fn commit(&mut self, state: AgentState, at: f64, action: Action) {
        if self.records.len() == self.params.theta_max + 1 {
            self.records.pop_front();
        }
        self.records.push_back(DecisionRecord {
            epoch: self.epochs,
            state,
            action,
            at,
            open: action == Action::Overhear,
        });
        self.epochs += 1;
    }

    /// One decision epoch: learn from `rewards`, pick an action for `state`
    /// with the scheduled exploration rate, remember it.
    pub fn on_epoch(&mut self, state: AgentState, at: f64, rewards: &[RewardEvent], rng: &mut impl Rng) -> Action {
        self.learn(state, at, rewards);
        let (action, _) = select(&self.table, state, self.epsilon(), rng);
        self.commit(state, at, action);
        action
    }

    pub fn greedy(&self, state: AgentState) -> (Action, usize) {
        self.table.greedy(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn s(energy: u8, degree: u8) -> AgentState {
        AgentState { energy, degree }
    }

    #[test]
    fn full_battery_all_native_history() {
        let q = Quantizer::default();
        let mut h = DegreeHistory::new(15);
        for _ in 0..15 {
            h.push(1);
        }
        assert_eq!(observe_state(8.0, 8.0, &h, &q), s(8, 1));
    }

    #[test]
    fn degree_bins() {
        let q = Quantizer::default();
        assert_eq!(q.degree_level(None), 1);
        assert_eq!(q.degree_level(Some(1.0)), 1);
        assert_eq!(q.degree_level(Some(1.1)), 1);
        assert_eq!(q.degree_level(Some(1.15)), 2);
        assert_eq!(q.degree_level(Some(1.2)), 2);
        assert_eq!(q.degree_level(Some(1.95)), 10);
        assert_eq!(q.degree_level(Some(2.0)), 10);
        assert_eq!(q.degree_level(Some(3.5)), 10);
    }

    #[test]
    fn energy_quantizer() {
        let q = Quantizer::default();
        assert_eq!(q.energy_level(3.2, 8.0), 4);
        assert_eq!(q.energy_level(8.0, 8.0), 8);
        assert_eq!(q.energy_level(0.0, 8.0), 1);
        assert_eq!(q.energy_level(1e-9, 8.0), 1);
    }

    #[test]
    fn history_keeps_last_c() {
        let mut h = DegreeHistory::new(3);
        assert_eq!(h.mean(), None);
        for d in [2, 2, 1, 1, 1] {
            h.push(d);
        }
        assert_eq!(h.mean(), Some(1.0));
        assert_eq!(h.len(), 3);
    }

    #[test]
    fn table_footprint() {
        let t = QTable::new(8, 10, 8);
        assert_eq!(t.len(), 1440);
        assert_eq!(t.rows().count(), 1440);
        assert_eq!(QTable::new(4, 1, 0).len(), 8);
    }

    #[test]
    fn zero_table_picks_overhear_with_no_delay() {
        let t = QTable::new(8, 10, 8);
        let mut rng = stream_rng(0, 0);
        assert_eq!(select(&t, s(3, 3), 0.0, &mut rng), (Action::Overhear, 0));
    }

    #[test]
    fn unique_max_wins() {
        let mut t = QTable::new(8, 10, 8);
        t.set(s(2, 5), Action::Sleep, 3, 1.0);
        let mut rng = stream_rng(0, 0);
        assert_eq!(select(&t, s(2, 5), 0.0, &mut rng), (Action::Sleep, 3));
        assert_eq!(t.best_delay(s(2, 5), Action::Sleep), 3);
        // other states untouched
        assert_eq!(t.greedy(s(2, 4)), (Action::Overhear, 0));
    }

    #[test]
    fn greedy_picks_best_action_inside_best_slice() {
        let mut t = QTable::new(1, 1, 2);
        let st = s(1, 1);
        t.set(st, Action::Overhear, 1, 5.0);
        t.set(st, Action::Sleep, 1, 4.0);
        t.set(st, Action::Sleep, 2, 4.5);
        assert_eq!(t.greedy(st), (Action::Overhear, 1));
    }

    #[test]
    fn full_exploration_splits_evenly() {
        let t = QTable::new(1, 1, 0);
        let mut rng = stream_rng(11, 0);
        let sleeps = (0..10_000)
            .filter(|_| select(&t, s(1, 1), 1.0, &mut rng).0 == Action::Sleep)
            .count();
        let frac = sleeps as f64 / 10_000.0;
        assert!((frac - 0.5).abs() <= 0.03, "sleep fraction {frac}");
    }

    #[test]
    fn discount_values() {
        assert_eq!(elapsed_discount(4.0, 4.0, 0.9), Ok(1.0));
        let d = elapsed_discount(1.0, 0.0, 0.9).unwrap();
        assert!((d - 0.40657).abs() < 1e-5);
        let mut prev = 1.0;
        for k in 1..60 {
            let d = elapsed_discount(k as f64, 0.0, 0.9).unwrap();
            assert!(d < prev);
            prev = d;
        }
        assert!(prev < 1e-20);
        assert!(elapsed_discount(0.0, 1.0, 0.9).is_err());
    }

    #[test]
    fn reward_composition() {
        assert_eq!(compose_reward(Action::Sleep, 3.27e-8), 0.0);
        assert_eq!(compose_reward(Action::Overhear, 3.27e-8), -3.27e-8);
        // two later credits on an overheard packet
        let net = compose_reward(Action::Overhear, 90.0) + 2.0 * 140.0;
        assert_eq!(net, 190.0);
    }

    fn params(theta_max: usize) -> LearningParams {
        LearningParams {
            beta: 0.5,
            gamma: 0.9,
            theta_max,
            exploration: Exploration::none(),
            time_unit: TimeUnit::Slots(1.0),
        }
    }

    #[test]
    fn single_update_hand_value() {
        let q = Quantizer {
            energy_levels: 1,
            degree_levels: 1,
            history: 1,
        };
        let mut rng = stream_rng(0, 0);
        for dt in [1.0, 3.0, 17.0] {
            let mut agent = Agent::new(&q, params(0));
            agent.on_epoch(s(1, 1), 0.0, &[], &mut rng);
            let r = RewardEvent {
                amount: 2.0,
                epoch: 0,
                arrival: 0,
            };
            agent.on_epoch(s(1, 1), dt, &[r], &mut rng);
            assert_eq!(agent.table().get(s(1, 1), Action::Overhear, 0), 1.0);
        }
    }

    #[test]
    fn first_epoch_updates_nothing() {
        let mut agent = Agent::new(&Quantizer::default(), params(8));
        assert_eq!(agent.learn(s(8, 1), 0.0, &[]), 0);
        agent.commit(s(8, 1), 0.0, Action::Overhear);
        assert_eq!(agent.learn(s(8, 1), 1.0, &[]), 1);
        agent.commit(s(8, 1), 1.0, Action::Overhear);
        assert_eq!(agent.learn(s(8, 1), 2.0, &[]), 2);
    }

    #[test]
    fn ring_holds_theta_max_plus_one() {
        let mut agent = Agent::new(&Quantizer::default(), params(3));
        let mut rng = stream_rng(0, 0);
        for k in 0..10 {
            agent.on_epoch(s(8, 1), k as f64, &[], &mut rng);
        }
        let epochs: Vec<u64> = agent.records().map(|r| r.epoch).collect();
        assert_eq!(epochs, alloc::vec![6, 7, 8, 9]);
        agent.close(8);
        assert!(!agent.records().find(|r| r.epoch == 8).unwrap().open);
    }

    #[test]
    fn delayed_reward_concentrates_on_true_delay() {
        // reward 1 for Overhear shows up exactly 3 epochs after the decision;
        // both actions are tried uniformly at random
        let q = Quantizer {
            energy_levels: 1,
            degree_levels: 1,
            history: 1,
        };
        let mut p = params(8);
        p.beta = 0.05;
        p.exploration = Exploration {
            start: 1.0,
            end: 1.0,
            horizon: 0,
        };
        let mut agent = Agent::new(&q, p);
        let mut rng = stream_rng(5, 0);
        let mut pending: Vec<(u64, RewardEvent)> = Vec::new();
        let st = s(1, 1);
        for t in 0..20_000u64 {
            let due: Vec<RewardEvent> = pending.iter().filter(|(d, _)| *d == t).map(|(_, r)| *r).collect();
            pending.retain(|(d, _)| *d != t);
            let a = agent.on_epoch(st, t as f64, &due, &mut rng);
            if a == Action::Overhear {
                // decision t is credited at the epoch t + 3 + 1 call
                pending.push((
                    t + 4,
                    RewardEvent {
                        amount: 1.0,
                        epoch: t,
                        arrival: t,
                    },
                ));
            }
        }
        assert_eq!(agent.table().best_delay(st, Action::Overhear), 3);
        assert_eq!(agent.greedy(st), (Action::Overhear, 3));
    }
}
