//! The slotted engine.
//!
//! Each slot: arrivals enter source queues, a seeded random permutation of
//! would-be senders is granted greedily under the unit-disk interference rule,
//! granted frames are delivered, neighbors with exactly one audible foreign
//! transmission get an overhearing opportunity (the agent's decision epoch),
//! pools age, and every live node pays for the mode it ended up in.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::hash::Hasher;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::agent::{observe_state, Action, Agent, AgentState, DegreeHistory, QTable, Quantizer, RewardEvent};
use crate::coding::{
    decode, emit_reception_report, plan_coding_set, take_planned, DecodeOutcome, Frame, Holdings, KnowledgeTable,
    NativePacket, OverheardPool, OwnStore, PacketHeader, PacketId, ReceptionReport,
};
use crate::config::{CodingParams, ConfigError, KnowledgeMode, MacParams, PolicyKind, ScenarioConfig, TopologySpec};
use crate::metrics::{EnergyBreakdown, MetricsReport, PacketRecord};
use crate::oracle::FixedPolicy;
use crate::rng::{stream, stream_rng, SimRng};
use crate::world::{build_topology, generate_arrivals, random_topology, Flow, NodeId, Point, Topology};
use crate::Slot;

/// Radio power draw and battery. Energies per slot are power times slot length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyModel {
    /// Watts.
    pub transmit_power: f64,
    /// Watts, for both addressed reception and overhearing.
    pub receive_power: f64,
    /// Watts.
    pub idle_power: f64,
    /// Seconds.
    pub slot_seconds: f64,
    /// Joules.
    pub capacity: f64,
    /// Joules added per slot while alive.
    pub recharge: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            transmit_power: 140e-6,
            receive_power: 90e-6,
            idle_power: 55e-6,
            // 500-byte packet at 11 Mbit/s
            slot_seconds: 500.0 * 8.0 / 11e6,
            capacity: 1e-3,
            recharge: 0.0,
        }
    }
}

impl EnergyModel {
    pub fn transmit_energy(&self) -> f64 {
        self.transmit_power * self.slot_seconds
    }

    pub fn receive_energy(&self) -> f64 {
        self.receive_power * self.slot_seconds
    }

    pub fn idle_energy(&self) -> f64 {
        self.idle_power * self.slot_seconds
    }

    pub fn cost(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Send => self.transmit_energy(),
            Mode::Receive | Mode::Overhear => self.receive_energy(),
            Mode::Idle => self.idle_energy(),
            Mode::Sleep => 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !(ok(self.transmit_power) && ok(self.receive_power) && ok(self.idle_power) && ok(self.recharge)) {
            return Err(ConfigError::Invalid {
                key: "energy",
                reason: "powers and recharge must be finite and non-negative".into(),
            });
        }
        if !(self.slot_seconds > 0.0) || !(self.capacity > 0.0) {
            return Err(ConfigError::Invalid {
                key: "energy",
                reason: "slot length and capacity must be positive".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Send,
    Receive,
    Overhear,
    Idle,
    Sleep,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Send => "send",
            Mode::Receive => "receive",
            Mode::Overhear => "overhear",
            Mode::Idle => "idle",
            Mode::Sleep => "sleep",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Battery bookkeeping. `initial - residual + recharged + deficit` always
/// equals the sum of per-mode charges; `deficit` is the part of the last
/// charge a dying node could not pay.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyLedger {
    pub initial: f64,
    pub residual: f64,
    pub recharged: f64,
    pub deficit: f64,
    pub sends: u64,
    pub receives: u64,
    pub overhears: u64,
    pub idle: u64,
    pub sleeps: u64,
}

impl EnergyLedger {
    pub fn full(capacity: f64) -> Self {
        Self {
            initial: capacity,
            residual: capacity,
            ..Self::default()
        }
    }

    /// Charges one slot spent in `mode`. Returns false if the node died.
    pub fn charge(&mut self, mode: Mode, model: &EnergyModel) -> bool {
        match mode {
            Mode::Send => self.sends += 1,
            Mode::Receive => self.receives += 1,
            Mode::Overhear => self.overhears += 1,
            Mode::Idle => self.idle += 1,
            Mode::Sleep => self.sleeps += 1,
        }
        let mut left = self.residual - model.cost(mode);
        if left <= 0.0 {
            self.deficit += -left;
            self.residual = 0.0;
            return false;
        }
        if model.recharge > 0.0 {
            let room = (model.capacity - left).max(0.0);
            let added = model.recharge.min(room);
            left += added;
            self.recharged += added;
        }
        self.residual = left;
        true
    }

    /// Energy charged so far according to the mode counters.
    pub fn charged(&self, model: &EnergyModel) -> f64 {
        model.transmit_energy() * self.sends as f64
            + model.receive_energy() * (self.receives + self.overhears) as f64
            + model.idle_energy() * self.idle as f64
    }

    /// Energy drawn from the battery, by balance.
    pub fn spent(&self) -> f64 {
        self.initial - self.residual + self.recharged + self.deficit
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NodeCounters {
    pub useful_overhears: u64,
    pub useless_overhears: u64,
    pub decode_failures: u64,
    pub redundant_receptions: u64,
    pub route_failures: u64,
    pub queue_drops: u64,
    pub collisions: u64,
    pub reports_sent: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochSample {
    pub slot: Slot,
    pub state: AgentState,
    pub action: Action,
    /// Greedy action for `state` after this epoch's update. Equals `action`
    /// for fixed policies.
    pub greedy: Action,
    /// Summed reward credited at this epoch.
    pub reward: f64,
}

#[derive(Debug, Clone)]
pub enum Decider {
    Learned(Agent),
    Fixed(FixedPolicy),
}

#[derive(Debug, Clone)]
pub struct Queued {
    pub packet: NativePacket,
    /// First slot this packet may head a transmission.
    pub ready_at: Slot,
}

#[derive(Debug, Clone)]
pub struct NodeRuntime {
    pub id: NodeId,
    pub energy: EnergyLedger,
    pub alive: bool,
    pub death: Option<Slot>,
    pub queue: VecDeque<Queued>,
    pub pool: OverheardPool,
    pub own: OwnStore,
    pub knowledge: KnowledgeTable,
    pub degrees: DegreeHistory,
    pub decider: Decider,
    pub rng: SimRng,
    pub epochs: u64,
    pending: Vec<RewardEvent>,
    pub epoch_log: Vec<EpochSample>,
    report_due: bool,
    last_report: Option<Slot>,
    pub counters: NodeCounters,
}

impl NodeRuntime {
    pub fn holds(&self, id: PacketId) -> bool {
        self.own.contains(id) || self.pool.contains(id)
    }

    pub fn q_table(&self) -> Option<&QTable> {
        match &self.decider {
            Decider::Learned(agent) => Some(agent.table()),
            Decider::Fixed(_) => None,
        }
    }

    pub fn sends(&self) -> u64 {
        self.energy.sends
    }

    pub fn receives(&self) -> u64 {
        self.energy.receives
    }

    pub fn overhears(&self) -> u64 {
        self.energy.overhears
    }

    pub fn idle_slots(&self) -> u64 {
        self.energy.idle
    }

    pub fn sleep_slots(&self) -> u64 {
        self.energy.sleeps
    }
}

/// Debits `mode` from `node`'s battery and marks it dead when empty.
pub fn account_energy(node: &mut NodeRuntime, mode: Mode, model: &EnergyModel, slot: Slot) {
    debug_assert!(node.alive);
    if !node.energy.charge(mode, model) {
        node.alive = false;
        node.death = Some(slot);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Data(Frame),
    Report,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub frame_id: u64,
    pub sender: NodeId,
    pub payload: Payload,
    pub receivers: Vec<NodeId>,
    /// Standalone report, or the one piggybacked on a data frame.
    pub report: ReceptionReport,
}

impl Transmission {
    pub fn is_data(&self) -> bool {
        matches!(self.payload, Payload::Data(_))
    }
}

/// A would-be sender, in the order it was considered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub sender: NodeId,
    pub receivers: Vec<NodeId>,
    pub granted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub slot: Slot,
    /// `None` for dead nodes.
    pub modes: Vec<Option<Mode>>,
    pub candidates: Vec<Candidate>,
    pub transmissions: Vec<Transmission>,
    /// Nodes that heard two or more senders, with those senders.
    pub collisions: Vec<(NodeId, Vec<NodeId>)>,
}

/// Two transmissions conflict when either sender is within range of one of
/// the other's receivers (a node is always in range of itself).
pub fn conflicts(topology: &Topology, a: NodeId, a_rx: &[NodeId], b: NodeId, b_rx: &[NodeId]) -> bool {
    a_rx.iter().any(|&r| topology.interferes(b, r)) || b_rx.iter().any(|&r| topology.interferes(a, r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub slot: Slot,
    pub node: NodeId,
    pub mode: Mode,
    pub frame: Option<u64>,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.frame {
            Some(id) => write!(f, "{} {} {} {}", self.slot, self.node, self.mode, id),
            None => write!(f, "{} {} {} -", self.slot, self.node, self.mode),
        }
    }
}

/// 64-bit FNV-1a.
#[derive(Debug, Clone, Copy)]
pub struct TraceHasher(u64);

impl Default for TraceHasher {
    fn default() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }
}

impl Hasher for TraceHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
}

impl TraceHasher {
    fn event(&mut self, e: &TraceEvent) {
        self.write_u64(e.slot);
        self.write_u32(e.node.0);
        self.write_u8(e.mode as u8);
        self.write_u64(e.frame.map_or(u64::MAX, |f| f));
    }
}

/// A delivered packet as seen by its destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub id: PacketId,
    pub slot: Slot,
}

/// Network state shared by the per-slot steps.
#[derive(Debug, Clone)]
pub struct World {
    pub topology: Topology,
    pub nodes: Vec<NodeRuntime>,
    pub energy: EnergyModel,
    pub coding: CodingParams,
    pub mac: MacParams,
    pub quantizer: Quantizer,
    next_frame: u64,
    next_packet: u64,
    pub deliveries: Vec<Delivery>,
}

impl World {
    pub fn new(
        topology: Topology,
        energy: EnergyModel,
        coding: CodingParams,
        mac: MacParams,
        quantizer: Quantizer,
        policy: PolicyKind,
        learning: crate::agent::LearningParams,
        seed: u64,
    ) -> Self {
        let nodes = topology
            .nodes()
            .map(|id| NodeRuntime {
                id,
                energy: EnergyLedger::full(energy.capacity),
                alive: true,
                death: None,
                queue: VecDeque::new(),
                pool: OverheardPool::new(coding.pool_capacity, coding.alpha),
                own: OwnStore::default(),
                knowledge: KnowledgeTable::new(coding.alpha),
                degrees: DegreeHistory::new(quantizer.history),
                decider: match policy {
                    PolicyKind::Learned => Decider::Learned(Agent::new(&quantizer, learning)),
                    PolicyKind::Fixed(p) => Decider::Fixed(p),
                },
                rng: stream_rng(seed, stream::AGENT_BASE + u64::from(id.0)),
                epochs: 0,
                pending: Vec::new(),
                epoch_log: Vec::new(),
                report_due: false,
                last_report: None,
                counters: NodeCounters::default(),
            })
            .collect();
        Self {
            topology,
            nodes,
            energy,
            coding,
            mac,
            quantizer,
            next_frame: 0,
            next_packet: 0,
            deliveries: Vec::new(),
        }
    }

    fn holds(&self, observer: &NodeRuntime, neighbor: NodeId, id: PacketId, slot: Slot) -> bool {
        match self.coding.knowledge {
            KnowledgeMode::Reports => observer.knowledge.holds(neighbor, id, slot),
            KnowledgeMode::Oracle => self.nodes[neighbor.index()].holds(id),
        }
    }

    /// A fresh packet of `flow` enters its source. Returns the new id, or
    /// `None` if the source is dead.
    pub fn inject(&mut self, flow: &Flow, slot: Slot) -> Option<PacketId> {
        let src = flow.source.index();
        if !self.nodes[src].alive {
            return None;
        }
        let id = PacketId(self.next_packet);
        self.next_packet += 1;
        let mut payload = vec![0u8; (flow.packet_bits / 8) as usize];
        stream_rng(id.0, stream::PAYLOAD).fill_bytes(&mut payload);
        let next_hop = match self.topology.next_hop(flow.source, flow.destination) {
            Ok(h) => h,
            Err(_) => {
                self.nodes[src].counters.route_failures += 1;
                return Some(id);
            }
        };
        let packet = NativePacket {
            header: PacketHeader {
                id,
                flow: flow.id,
                source: flow.source,
                destination: flow.destination,
                next_hop,
                created: slot,
            },
            payload,
        };
        let alpha = self.coding.alpha;
        let cap = self.mac.queue_capacity;
        let node = &mut self.nodes[src];
        node.own.insert(packet.clone(), slot + alpha);
        if node.queue.len() >= cap {
            node.counters.queue_drops += 1;
        } else {
            node.queue.push_back(Queued { packet, ready_at: slot });
        }
        Some(id)
    }

    /// Queue positions and receivers of what `node` would send now. An empty
    /// plan means a standalone reception report.
    fn plan(&self, node: &NodeRuntime, slot: Slot) -> Option<(Vec<usize>, Vec<NodeId>)> {
        if let Some(head) = node.queue.front() {
            if head.ready_at <= slot {
                let headers: Vec<PacketHeader> = node.queue.iter().map(|q| q.packet.header).collect();
                let plan = plan_coding_set(&headers, |nb, id| self.holds(node, nb, id, slot));
                let receivers = plan.iter().map(|&i| headers[i].next_hop).collect();
                return Some((plan, receivers));
            }
        }
        let period_ok = node
            .last_report
            .is_none_or(|last| slot >= last + self.coding.report_period);
        if node.report_due && period_ok {
            let receivers: Vec<NodeId> = self
                .topology
                .neighbors(node.id)
                .iter()
                .copied()
                .filter(|n| self.nodes[n.index()].alive)
                .collect();
            if !receivers.is_empty() {
                return Some((Vec::new(), receivers));
            }
        }
        None
    }
}

/// Grants transmissions for `slot` and pulls the granted frames out of their
/// queues. Candidates are taken in a random order drawn from `rng`.
pub fn schedule_slot(world: &mut World, slot: Slot, rng: &mut impl Rng) -> SlotOutcome {
    // packets toward a dead next hop can never leave
    for i in 0..world.nodes.len() {
        if !world.nodes[i].alive {
            continue;
        }
        let before = world.nodes[i].queue.len();
        let alive: Vec<bool> = world.nodes.iter().map(|n| n.alive).collect();
        let node = &mut world.nodes[i];
        node.queue.retain(|q| alive[q.packet.header.next_hop.index()]);
        node.counters.queue_drops += (before - node.queue.len()) as u64;
    }

    let mut order: Vec<NodeId> = world.nodes.iter().filter(|n| n.alive).map(|n| n.id).collect();
    order.shuffle(rng);

    // data goes first; standalone reports take whatever airtime is left
    let mut planned: Vec<(NodeId, Vec<usize>, Vec<NodeId>)> = order
        .into_iter()
        .filter_map(|sender| {
            world
                .plan(&world.nodes[sender.index()], slot)
                .map(|(plan, receivers)| (sender, plan, receivers))
        })
        .collect();
    planned.sort_by_key(|(_, plan, _)| plan.is_empty());

    let mut candidates = Vec::new();
    let mut granted: Vec<(NodeId, bool, Vec<usize>, Vec<NodeId>)> = Vec::new();
    for (sender, plan, receivers) in planned {
        let is_data = !plan.is_empty();
        let ok = granted
            .iter()
            .all(|(g, _, _, g_rx)| !conflicts(&world.topology, sender, &receivers, *g, g_rx));
        candidates.push(Candidate {
            sender,
            receivers: receivers.clone(),
            granted: ok,
        });
        if ok {
            granted.push((sender, is_data, plan, receivers));
        }
    }

    let mut transmissions = Vec::with_capacity(granted.len());
    for (sender, is_data, plan, receivers) in granted {
        let frame_id = world.next_frame;
        world.next_frame += 1;
        let node = &mut world.nodes[sender.index()];
        let payload = if is_data {
            let frame = take_planned(&mut node.queue, &plan, |q| q.packet).expect("non-empty plan");
            Payload::Data(frame)
        } else {
            node.last_report = Some(slot);
            node.counters.reports_sent += 1;
            Payload::Report
        };
        node.report_due = false;
        let report = emit_reception_report(sender, &node.own, &node.pool, slot);
        transmissions.push(Transmission {
            frame_id,
            sender,
            payload,
            receivers,
            report,
        });
    }

    SlotOutcome {
        slot,
        modes: vec![None; world.nodes.len()],
        candidates,
        transmissions,
        collisions: Vec::new(),
    }
}

impl World {
    fn decide(&mut self, v: usize, slot: Slot) -> Action {
        let capacity = self.energy.capacity;
        let quantizer = self.quantizer;
        let receive_energy = self.energy.receive_energy();
        let node = &mut self.nodes[v];
        let state = observe_state(node.energy.residual, capacity, &node.degrees, &quantizer);
        let rewards = core::mem::take(&mut node.pending);
        let reward: f64 = rewards.iter().map(|r| r.amount).sum();
        let (action, greedy) = match &mut node.decider {
            Decider::Learned(agent) => {
                let a = agent.on_epoch(state, slot as f64, &rewards, &mut node.rng);
                (a, agent.greedy(state).0)
            }
            Decider::Fixed(p) => {
                let a = p.apply(&mut node.rng);
                (a, a)
            }
        };
        let epoch = node.epochs;
        node.epochs += 1;
        node.epoch_log.push(EpochSample {
            slot,
            state,
            action,
            greedy,
            reward,
        });
        if action == Action::Overhear {
            node.pending.push(RewardEvent {
                amount: -receive_energy,
                epoch,
                arrival: slot,
            });
        }
        action
    }

    fn close_epoch(&mut self, v: usize, epoch: Option<u64>) {
        if let (Some(e), Decider::Learned(agent)) = (epoch, &mut self.nodes[v].decider) {
            agent.close(e);
        }
    }

    fn credit(&mut self, v: usize, headers: &[PacketHeader], slot: Slot) {
        let reward = self.energy.transmit_energy();
        let node = &mut self.nodes[v];
        for c in node.pool.credit(headers, slot) {
            if c.psi == 1 {
                node.counters.useful_overhears += 1;
            }
            if let Some(epoch) = c.epoch {
                node.pending.push(RewardEvent {
                    amount: reward,
                    epoch,
                    arrival: slot,
                });
            }
        }
    }

    fn pool_insert(&mut self, v: usize, packet: NativePacket, slot: Slot, epoch: Option<u64>) {
        let node = &mut self.nodes[v];
        if let Some(evicted) = node.pool.insert(packet, slot, epoch) {
            if evicted.psi == 0 {
                node.counters.useless_overhears += 1;
                let e = evicted.epoch;
                self.close_epoch(v, e);
            }
        }
        self.nodes[v].report_due = true;
    }

    /// The node got its own copy of `packet`: deliver it or queue it onward.
    fn accept(&mut self, v: usize, mut packet: NativePacket, slot: Slot) {
        let alpha = self.coding.alpha;
        let hold = self.mac.relay_hold;
        let cap = self.mac.queue_capacity;
        let me = NodeId(v as u32);
        self.nodes[v].own.insert(packet.clone(), slot + alpha);
        if packet.header.destination == me {
            self.deliveries.push(Delivery { id: packet.id(), slot });
            return;
        }
        match self.topology.next_hop(me, packet.header.destination) {
            Ok(h) => {
                packet.header.next_hop = h;
                let node = &mut self.nodes[v];
                if node.queue.len() >= cap {
                    node.counters.queue_drops += 1;
                } else {
                    node.queue.push_back(Queued {
                        packet,
                        ready_at: slot + 1 + hold,
                    });
                }
            }
            Err(_) => self.nodes[v].counters.route_failures += 1,
        }
    }

    fn receive(&mut self, v: usize, tx: &Transmission, slot: Slot) {
        self.nodes[v].knowledge.update(tx.sender, &tx.report, slot);
        let Payload::Data(frame) = &tx.payload else { return };
        self.nodes[v].degrees.push(frame.degree());
        match frame {
            Frame::Native(p) => self.accept(v, p.clone(), slot),
            Frame::Coded(c) => {
                self.credit(v, c.constituents(), slot);
                let me = NodeId(v as u32);
                let Some(mine) = c.constituents().iter().find(|h| h.next_hop == me) else {
                    return;
                };
                if self.nodes[v].holds(mine.id) {
                    self.nodes[v].counters.redundant_receptions += 1;
                    return;
                }
                let node = &self.nodes[v];
                let outcome = decode(
                    c,
                    &Holdings {
                        own: &node.own,
                        pool: &node.pool,
                    },
                );
                match outcome {
                    DecodeOutcome::Recovered(p) if p.id() == mine.id => self.accept(v, p, slot),
                    _ => self.nodes[v].counters.decode_failures += 1,
                }
            }
        }
    }

    fn overhear(&mut self, v: usize, tx: &Transmission, slot: Slot, epoch: u64) {
        self.nodes[v].knowledge.update(tx.sender, &tx.report, slot);
        let Payload::Data(frame) = &tx.payload else { return };
        self.nodes[v].degrees.push(frame.degree());
        let fresh = match frame {
            Frame::Native(p) => Some(p.clone()),
            Frame::Coded(c) => {
                self.credit(v, c.constituents(), slot);
                let node = &self.nodes[v];
                match decode(
                    c,
                    &Holdings {
                        own: &node.own,
                        pool: &node.pool,
                    },
                ) {
                    DecodeOutcome::Recovered(p) => Some(p),
                    _ => None,
                }
            }
        };
        match fresh {
            Some(p) if !self.nodes[v].holds(p.id()) => self.pool_insert(v, p, slot, Some(epoch)),
            _ => {
                self.nodes[v].counters.useless_overhears += 1;
                self.close_epoch(v, Some(epoch));
            }
        }
    }

    fn age(&mut self, slot: Slot) {
        for v in 0..self.nodes.len() {
            if !self.nodes[v].alive {
                continue;
            }
            let useless = self.nodes[v].pool.age(slot);
            for e in useless {
                self.nodes[v].counters.useless_overhears += 1;
                self.close_epoch(v, e.epoch);
            }
            let node = &mut self.nodes[v];
            node.own.age(slot);
            node.knowledge.prune(slot);
        }
    }
}

/// Hands granted frames to their receivers, runs decision epochs at
/// overhearing opportunities and fills in every live node's mode.
pub fn deliver(outcome: &mut SlotOutcome, world: &mut World) {
    let slot = outcome.slot;
    let n = world.nodes.len();
    let mut modes: Vec<Option<Mode>> = world
        .nodes
        .iter()
        .map(|node| if node.alive { Some(Mode::Idle) } else { None })
        .collect();
    for tx in &outcome.transmissions {
        modes[tx.sender.index()] = Some(Mode::Send);
    }
    for tx in &outcome.transmissions {
        for r in &tx.receivers {
            debug_assert_ne!(modes[r.index()], Some(Mode::Send), "half-duplex");
            modes[r.index()] = Some(Mode::Receive);
        }
    }
    let mut heard: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, tx) in outcome.transmissions.iter().enumerate() {
        for nb in world.topology.neighbors(tx.sender) {
            heard[nb.index()].push(i);
        }
    }

    let transmissions = core::mem::take(&mut outcome.transmissions);
    for tx in &transmissions {
        for r in &tx.receivers {
            world.receive(r.index(), tx, slot);
        }
    }
    for v in 0..n {
        if modes[v] != Some(Mode::Idle) {
            continue;
        }
        match heard[v].as_slice() {
            [] => {}
            [only] => {
                let tx = &transmissions[*only];
                let epoch = world.nodes[v].epochs;
                match world.decide(v, slot) {
                    Action::Overhear => {
                        modes[v] = Some(Mode::Overhear);
                        world.overhear(v, tx, slot, epoch);
                    }
                    Action::Sleep => modes[v] = Some(Mode::Sleep),
                }
            }
            many => {
                world.nodes[v].counters.collisions += 1;
                outcome
                    .collisions
                    .push((NodeId(v as u32), many.iter().map(|&i| transmissions[i].sender).collect()));
            }
        }
    }
    outcome.transmissions = transmissions;
    outcome.modes = modes;
}

/// Everything needed to run one scenario slot by slot.
#[derive(Debug, Clone)]
pub struct Simulation {
    world: World,
    flows: Vec<Flow>,
    arrivals: Vec<(Slot, usize)>,
    next_arrival: usize,
    mac_rng: SimRng,
    slot: Slot,
    duration: Slot,
    packets: BTreeMap<PacketId, PacketRecord>,
    data_transmissions: u64,
    coded_transmissions: u64,
    native_equivalent: u64,
    report_transmissions: u64,
    energy: EnergyBreakdown,
    hasher: TraceHasher,
    trace: Option<Vec<TraceEvent>>,
}

/// Flows named in the config, or random routable pairs drawn from the flow
/// stream.
pub fn build_flows(config: &ScenarioConfig, topology: &Topology, seed: u64) -> Vec<Flow> {
    let t = &config.traffic;
    let end = t.end.unwrap_or(config.duration - 1).min(config.duration - 1);
    let bits = t.packet_bytes * 8;
    if !t.flows.is_empty() {
        return t
            .flows
            .iter()
            .enumerate()
            .map(|(i, f)| Flow {
                id: i as u32,
                source: NodeId(f.source),
                destination: NodeId(f.destination),
                packet_bits: bits,
                mean_gap: f.mean_gap.unwrap_or(t.mean_gap),
                start: f.start.unwrap_or(t.start),
                end: f.end.unwrap_or(end),
            })
            .collect();
    }
    let n = topology.len() as u32;
    let mut rng = stream_rng(seed, stream::FLOWS);
    (0..t.flow_count)
        .map(|i| {
            let mut pair = (NodeId(0), NodeId(1.min(n - 1)));
            for _ in 0..1000 {
                let s = rng.random_range(0..n);
                let d = rng.random_range(0..n);
                if s == d {
                    continue;
                }
                pair = (NodeId(s), NodeId(d));
                if topology.greedy_path(pair.0, pair.1).is_ok() {
                    break;
                }
            }
            Flow {
                id: i as u32,
                source: pair.0,
                destination: pair.1,
                packet_bits: bits,
                mean_gap: t.mean_gap,
                start: t.start,
                end,
            }
        })
        .collect()
}

pub fn build_world_topology(config: &ScenarioConfig, seed: u64) -> Result<Topology, ConfigError> {
    Ok(match &config.topology {
        TopologySpec::Random {
            nodes,
            width,
            height,
            radius,
        } => random_topology(*nodes, *width, *height, *radius, seed)?,
        TopologySpec::Explicit { radius, positions } => {
            let points: Vec<Point> = positions.iter().map(|&[x, y]| Point { x, y }).collect();
            build_topology(&points, *radius)?
        }
    })
}

impl Simulation {
    /// Validates `config` and sets up slot 0 using `config.seed`.
    pub fn new(config: &ScenarioConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let seed = config.seed;
        let topology = build_world_topology(config, seed)?;
        let flows = build_flows(config, &topology, seed);
        for f in &flows {
            f.validate()?;
        }
        Ok(Self::from_parts(config, topology, flows))
    }

    /// Runs with an already built topology and flow list.
    pub fn from_parts(config: &ScenarioConfig, topology: Topology, flows: Vec<Flow>) -> Self {
        let seed = config.seed;
        let mut arrivals: Vec<(Slot, usize)> = flows
            .iter()
            .enumerate()
            .flat_map(|(i, f)| generate_arrivals(f, seed).into_iter().map(move |s| (s, i)))
            .collect();
        arrivals.sort_unstable();
        let world = World::new(
            topology,
            config.energy,
            config.coding,
            config.mac,
            config.state,
            config.policy,
            config.learning,
            seed,
        );
        Self {
            world,
            flows,
            arrivals,
            next_arrival: 0,
            mac_rng: stream_rng(seed, stream::MAC),
            slot: 0,
            duration: config.duration,
            packets: BTreeMap::new(),
            data_transmissions: 0,
            coded_transmissions: 0,
            native_equivalent: 0,
            report_transmissions: 0,
            energy: EnergyBreakdown::default(),
            hasher: TraceHasher::default(),
            trace: if config.output.trace { Some(Vec::new()) } else { None },
        }
    }

    pub fn record_trace(&mut self, on: bool) {
        self.trace = if on { Some(Vec::new()) } else { None };
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn flows(&self) -> &[Flow] {
        &self.flows
    }

    pub fn slot(&self) -> Slot {
        self.slot
    }

    pub fn is_done(&self) -> bool {
        self.slot >= self.duration
    }

    pub fn trace(&self) -> Option<&[TraceEvent]> {
        self.trace.as_deref()
    }

    pub fn trace_hash(&self) -> u64 {
        self.hasher.finish()
    }

    /// Advances one slot and returns what happened in it, or `None` once the
    /// configured duration has elapsed.
    pub fn step(&mut self) -> Option<SlotOutcome> {
        if self.is_done() {
            return None;
        }
        let slot = self.slot;
        while let Some(&(at, f)) = self.arrivals.get(self.next_arrival) {
            if at > slot {
                break;
            }
            self.next_arrival += 1;
            let flow = self.flows[f].clone();
            if let Some(id) = self.world.inject(&flow, slot) {
                self.packets.insert(
                    id,
                    PacketRecord {
                        id,
                        flow: flow.id,
                        bits: flow.packet_bits,
                        created: slot,
                        first_transmission: None,
                        delivered: None,
                    },
                );
            }
        }

        let mut outcome = schedule_slot(&mut self.world, slot, &mut self.mac_rng);
        for tx in &outcome.transmissions {
            match &tx.payload {
                Payload::Data(frame) => {
                    self.data_transmissions += 1;
                    self.native_equivalent += frame.degree() as u64;
                    if frame.degree() > 1 {
                        self.coded_transmissions += 1;
                    }
                    for h in frame.headers() {
                        if let Some(rec) = self.packets.get_mut(&h.id) {
                            rec.first_transmission.get_or_insert(slot);
                        }
                    }
                }
                Payload::Report => self.report_transmissions += 1,
            }
        }
        let delivered_before = self.world.deliveries.len();
        deliver(&mut outcome, &mut self.world);
        for d in &self.world.deliveries[delivered_before..] {
            if let Some(rec) = self.packets.get_mut(&d.id) {
                rec.delivered.get_or_insert(d.slot);
            }
        }

        self.world.age(slot);

        let frame_of = |v: NodeId, mode: Mode| -> Option<u64> {
            outcome.transmissions.iter().find_map(|tx| {
                let hit = match mode {
                    Mode::Send => tx.sender == v,
                    Mode::Receive => tx.receivers.contains(&v),
                    Mode::Overhear => self.world.topology.are_neighbors(tx.sender, v) && !tx.receivers.contains(&v),
                    Mode::Idle | Mode::Sleep => false,
                };
                hit.then_some(tx.frame_id)
            })
        };
        let model = self.world.energy;
        for v in 0..self.world.nodes.len() {
            let Some(mode) = outcome.modes[v] else { continue };
            let event = TraceEvent {
                slot,
                node: NodeId(v as u32),
                mode,
                frame: frame_of(NodeId(v as u32), mode),
            };
            self.hasher.event(&event);
            if let Some(trace) = &mut self.trace {
                trace.push(event);
            }
            let cost = model.cost(mode);
            match mode {
                Mode::Send => self.energy.transmit += cost,
                Mode::Receive => self.energy.receive += cost,
                Mode::Overhear => self.energy.overhear += cost,
                Mode::Idle => self.energy.idle += cost,
                Mode::Sleep => {}
            }
            let node = &mut self.world.nodes[v];
            account_energy(node, mode, &model, slot);
            if !node.alive {
                node.counters.queue_drops += node.queue.len() as u64;
                node.queue.clear();
            }
        }

        self.slot += 1;
        Some(outcome)
    }

    pub fn run_to_end(&mut self) {
        while self.step().is_some() {}
    }

    pub fn q_tables(&self) -> Vec<Option<&QTable>> {
        self.world.nodes.iter().map(|n| n.q_table()).collect()
    }

    /// Final metrics. Pool entries still waiting when the run ends count as
    /// useless unless they were already used.
    pub fn report(&self) -> MetricsReport {
        let nodes = &self.world.nodes;
        let mut counters = NodeCounters::default();
        for n in nodes {
            let c = &n.counters;
            counters.useful_overhears += c.useful_overhears;
            counters.useless_overhears += c.useless_overhears;
            counters.decode_failures += c.decode_failures;
            counters.redundant_receptions += c.redundant_receptions;
            counters.route_failures += c.route_failures;
            counters.queue_drops += c.queue_drops;
            counters.collisions += c.collisions;
            counters.reports_sent += c.reports_sent;
            counters.useless_overhears += n.pool.entries().filter(|e| e.psi == 0).count() as u64;
        }
        let packets: Vec<PacketRecord> = self.packets.values().copied().collect();
        let delivered_bits = packets
            .iter()
            .filter(|p| p.delivered.is_some())
            .map(|p| u64::from(p.bits))
            .sum();
        MetricsReport {
            duration: self.slot,
            nodes: nodes.len(),
            flows: self.flows.len(),
            data_transmissions: self.data_transmissions,
            coded_transmissions: self.coded_transmissions,
            native_equivalent: self.native_equivalent,
            report_transmissions: self.report_transmissions,
            delivered_bits,
            packets,
            energy: self.energy,
            deaths: nodes.iter().map(|n| n.death).collect(),
            epochs: nodes.iter().map(|n| n.epoch_log.clone()).collect(),
            send_slots: nodes.iter().map(|n| n.sends()).sum(),
            receive_slots: nodes.iter().map(|n| n.receives()).sum(),
            overhear_slots: nodes.iter().map(|n| n.overhears()).sum(),
            idle_slots: nodes.iter().map(|n| n.idle_slots()).sum(),
            sleep_slots: nodes.iter().map(|n| n.sleep_slots()).sum(),
            counters,
            trace_hash: self.trace_hash(),
        }
    }
}

/// Runs `config` for its full duration.
pub fn run(config: &ScenarioConfig) -> Result<MetricsReport, ConfigError> {
    let mut sim = Simulation::new(config)?;
    sim.run_to_end();
    Ok(sim.report())
}
