//! Static network geometry, flows and traffic.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)] // unused when std is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{stream, stream_rng};
use crate::Slot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("topology needs at least one node")]
    NoNodes,
    #[error("radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("area must be positive, got {0} x {1}")]
    InvalidArea(f64, f64),
    #[error("flow {0}: {1}")]
    InvalidFlow(u32, &'static str),
    #[error("node {0} is not part of the topology")]
    UnknownNode(NodeId),
}

/// Non-fatal findings while building a topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyWarning {
    /// Two nodes share the exact same position.
    Coincident(NodeId, NodeId),
}

/// Greedy forwarding hit a node with no neighbor closer to the destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no neighbor of {at} is closer to {destination}")]
pub struct RouteFailure {
    pub at: NodeId,
    pub destination: NodeId,
}

/// Unit-disk graph: `j` is a neighbor of `i` iff `i != j` and their distance
/// is at most the radius.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    positions: Vec<Point>,
    radius: f64,
    neighbors: Vec<Vec<NodeId>>,
    warnings: Vec<TopologyWarning>,
}

pub fn build_topology(positions: &[Point], radius: f64) -> Result<Topology, WorldError> {
    if positions.is_empty() {
        return Err(WorldError::NoNodes);
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(WorldError::InvalidRadius(radius));
    }
    let n = positions.len();
    let mut neighbors = alloc::vec![Vec::new(); n];
    let mut warnings = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let d = positions[i].distance(&positions[j]);
            if d == 0.0 {
                warnings.push(TopologyWarning::Coincident(NodeId(i as u32), NodeId(j as u32)));
            }
            if d <= radius {
                neighbors[i].push(NodeId(j as u32));
                neighbors[j].push(NodeId(i as u32));
            }
        }
    }
    // i < j insertion leaves lower ids first for j's list but appends in
    // mixed order for i; sort both for stable iteration.
    for list in &mut neighbors {
        list.sort_unstable();
    }
    Ok(Topology {
        positions: positions.to_vec(),
        radius,
        neighbors,
        warnings,
    })
}

/// `n` nodes placed uniformly at random in a `width` x `height` rectangle.
pub fn random_topology(
    n: usize,
    width: f64,
    height: f64,
    radius: f64,
    seed: u64,
) -> Result<Topology, WorldError> {
    if n == 0 {
        return Err(WorldError::NoNodes);
    }
    if !(width > 0.0 && height > 0.0) {
        return Err(WorldError::InvalidArea(width, height));
    }
    let mut rng = stream_rng(seed, stream::TOPOLOGY);
    let positions: Vec<Point> = (0..n)
        .map(|_| Point::new(rng.random::<f64>() * width, rng.random::<f64>() * height))
        .collect();
    build_topology(&positions, radius)
}

impl Topology {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.positions.len() as u32).map(NodeId)
    }

    pub fn position(&self, node: NodeId) -> Point {
        self.positions[node.index()]
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    /// Sorted by id.
    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.neighbors[node.index()]
    }

    pub fn are_neighbors(&self, a: NodeId, b: NodeId) -> bool {
        self.neighbors[a.index()].binary_search(&b).is_ok()
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        self.positions[a.index()].distance(&self.positions[b.index()])
    }

    /// Within interference range. Same rule as adjacency, but also true for a
    /// node and itself.
    pub fn interferes(&self, a: NodeId, b: NodeId) -> bool {
        a == b || self.distance(a, b) <= self.radius
    }

    pub fn warnings(&self) -> &[TopologyWarning] {
        &self.warnings
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.index() < self.positions.len()
    }

    /// Neighbor of `current` closest to `destination`, ties to the lowest id.
    /// Fails when no neighbor is strictly closer than `current` itself.
    pub fn next_hop(&self, current: NodeId, destination: NodeId) -> Result<NodeId, RouteFailure> {
        let fail = RouteFailure {
            at: current,
            destination,
        };
        let own = self.distance(current, destination);
        let mut best: Option<(f64, NodeId)> = None;
        for &candidate in self.neighbors(current) {
            let d = self.distance(candidate, destination);
            // neighbor lists are sorted, so strict < keeps the lowest id on ties
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, candidate));
            }
        }
        match best {
            Some((d, hop)) if d < own => Ok(hop),
            _ => Err(fail),
        }
    }

    /// Full greedy path from `source` to `destination`, both included.
    pub fn greedy_path(&self, source: NodeId, destination: NodeId) -> Result<Vec<NodeId>, RouteFailure> {
        let mut path = alloc::vec![source];
        let mut at = source;
        while at != destination {
            // strictly decreasing distance, so this terminates
            at = self.next_hop(at, destination)?;
            path.push(at);
        }
        Ok(path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub id: u32,
    pub source: NodeId,
    pub destination: NodeId,
    pub packet_bits: u32,
    /// Mean inter-arrival gap in slots. `f64::INFINITY` means no traffic.
    pub mean_gap: f64,
    pub start: Slot,
    pub end: Slot,
}

impl Flow {
    pub fn validate(&self) -> Result<(), WorldError> {
        if self.source == self.destination {
            return Err(WorldError::InvalidFlow(self.id, "source equals destination"));
        }
        if !(self.mean_gap > 0.0) {
            return Err(WorldError::InvalidFlow(self.id, "mean gap must be positive"));
        }
        if self.start > self.end {
            return Err(WorldError::InvalidFlow(self.id, "start after end"));
        }
        if self.packet_bits == 0 || self.packet_bits % 8 != 0 {
            return Err(WorldError::InvalidFlow(self.id, "packet size must be a positive whole number of bytes"));
        }
        Ok(())
    }
}

/// Arrival slots for `flow`: the first packet at `start`, then gaps drawn
/// from an exponential distribution, rounded up to whole slots (at least one).
pub fn generate_arrivals(flow: &Flow, seed: u64) -> Vec<Slot> {
    if !flow.mean_gap.is_finite() {
        return Vec::new();
    }
    let exp = match Exp::new(1.0 / flow.mean_gap) {
        Ok(exp) => exp,
        Err(_) => return Vec::new(),
    };
    let mut rng = stream_rng(seed, stream::ARRIVALS_BASE + u64::from(flow.id));
    let mut out = Vec::new();
    let mut at = flow.start;
    while at <= flow.end {
        out.push(at);
        let gap: f64 = exp.sample(&mut rng);
        let gap = (gap.ceil() as Slot).max(1);
        at = match at.checked_add(gap) {
            Some(next) => next,
            None => break,
        };
    }
    out
}

/// Per-link transmission intensities, transmissions per unit time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrafficRates {
    rates: BTreeMap<(NodeId, NodeId), f64>,
}

impl TrafficRates {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rejects negative rates and pairs that are not neighbors.
    pub fn set(&mut self, topology: &Topology, from: NodeId, to: NodeId, rate: f64) -> Result<(), WorldError> {
        if !topology.contains(from) {
            return Err(WorldError::UnknownNode(from));
        }
        if !topology.contains(to) || !topology.are_neighbors(from, to) {
            return Err(WorldError::UnknownNode(to));
        }
        if !(rate >= 0.0) {
            return Err(WorldError::InvalidFlow(0, "negative rate"));
        }
        self.rates.insert((from, to), rate);
        Ok(())
    }

    pub fn get(&self, from: NodeId, to: NodeId) -> f64 {
        self.rates.get(&(from, to)).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = ((NodeId, NodeId), f64)> + '_ {
        self.rates.iter().map(|(&k, &v)| (k, v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("node {0} never gets an overhearing opportunity")]
pub struct InfiniteGap(pub NodeId);

/// Mean time between overhearing opportunities at `node`: the inverse of the
/// total rate at which its neighbors transmit to someone other than `node`.
pub fn expected_epoch_gap(topology: &Topology, rates: &TrafficRates, node: NodeId) -> Result<f64, InfiniteGap> {
    let mut total = 0.0;
    for &i in topology.neighbors(node) {
        for &j in topology.neighbors(i) {
            if j != node {
                total += rates.get(i, j);
            }
        }
    }
    if total > 0.0 {
        Ok(1.0 / total)
    } else {
        Err(InfiniteGap(node))
    }
}
