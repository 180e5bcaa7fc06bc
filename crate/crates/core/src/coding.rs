//! Two-hop XOR inter-flow coding.
//!
//! A coder XORs packets bound for different next hops into one frame when
//! every next hop already holds all the other packets. What a neighbor holds
//! is learned from reception reports, so the pieces here are: frames and the
//! XOR itself, the pool of overheard packets with its aging deadline, the
//! store of packets a node owns (generated, received, forwarded), and the
//! per-neighbor knowledge table fed by reports.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::NodeId;
use crate::Slot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PacketId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketHeader {
    pub id: PacketId,
    pub flow: u32,
    pub source: NodeId,
    pub destination: NodeId,
    pub next_hop: NodeId,
    pub created: Slot,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NativePacket {
    pub header: PacketHeader,
    pub payload: Vec<u8>,
}

impl NativePacket {
    pub fn id(&self) -> PacketId {
        self.header.id
    }
}

/// XOR of two or more natives with pairwise distinct next hops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedPacket {
    constituents: Vec<PacketHeader>,
    payload: Vec<u8>,
}

impl CodedPacket {
    pub fn constituents(&self) -> &[PacketHeader] {
        &self.constituents
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn degree(&self) -> usize {
        self.constituents.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    Native(NativePacket),
    Coded(CodedPacket),
}

impl Frame {
    pub fn degree(&self) -> usize {
        match self {
            Frame::Native(_) => 1,
            Frame::Coded(c) => c.degree(),
        }
    }

    pub fn headers(&self) -> Vec<PacketHeader> {
        match self {
            Frame::Native(p) => alloc::vec![p.header],
            Frame::Coded(c) => c.constituents.clone(),
        }
    }

    /// Intended receivers, in constituent order.
    pub fn next_hops(&self) -> Vec<NodeId> {
        match self {
            Frame::Native(p) => alloc::vec![p.header.next_hop],
            Frame::Coded(c) => c.constituents.iter().map(|h| h.next_hop).collect(),
        }
    }

    pub fn first_id(&self) -> PacketId {
        match self {
            Frame::Native(p) => p.id(),
            Frame::Coded(c) => c.constituents[0].id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodingError {
    #[error("coding needs at least two packets, got {0}")]
    TooFewPackets(usize),
    #[error("payload sizes differ ({0} vs {1} bytes)")]
    SizeMismatch(usize, usize),
    #[error("next hop {0} appears twice")]
    DuplicateNextHop(NodeId),
    #[error("packet {0:?} appears twice")]
    DuplicatePacket(PacketId),
}

pub fn xor_into(acc: &mut [u8], other: &[u8]) {
    for (a, b) in acc.iter_mut().zip(other) {
        *a ^= *b;
    }
}

pub fn encode(packets: &[NativePacket]) -> Result<CodedPacket, CodingError> {
    if packets.len() < 2 {
        return Err(CodingError::TooFewPackets(packets.len()));
    }
    let size = packets[0].payload.len();
    let mut hops = BTreeSet::new();
    let mut ids = BTreeSet::new();
    for p in packets {
        if p.payload.len() != size {
            return Err(CodingError::SizeMismatch(size, p.payload.len()));
        }
        if !hops.insert(p.header.next_hop) {
            return Err(CodingError::DuplicateNextHop(p.header.next_hop));
        }
        if !ids.insert(p.id()) {
            return Err(CodingError::DuplicatePacket(p.id()));
        }
    }
    let mut payload = packets[0].payload.clone();
    for p in &packets[1..] {
        xor_into(&mut payload, &p.payload);
    }
    Ok(CodedPacket {
        constituents: packets.iter().map(|p| p.header).collect(),
        payload,
    })
}

/// Somewhere to look up payloads of packets a node already has.
pub trait PacketLookup {
    fn payload(&self, id: PacketId) -> Option<&[u8]>;
}

impl PacketLookup for BTreeMap<PacketId, NativePacket> {
    fn payload(&self, id: PacketId) -> Option<&[u8]> {
        self.get(&id).map(|p| p.payload.as_slice())
    }
}

impl PacketLookup for [NativePacket] {
    fn payload(&self, id: PacketId) -> Option<&[u8]> {
        self.iter().find(|p| p.id() == id).map(|p| p.payload.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeOutcome {
    Recovered(NativePacket),
    /// Every constituent was already known.
    Redundant,
    /// More than one constituent missing.
    Failure { missing: usize },
}

pub fn decode(coded: &CodedPacket, known: &(impl PacketLookup + ?Sized)) -> DecodeOutcome {
    let mut missing = None;
    let mut missing_count = 0;
    let mut payload = coded.payload.clone();
    for header in &coded.constituents {
        match known.payload(header.id) {
            Some(bytes) => xor_into(&mut payload, bytes),
            None => {
                missing_count += 1;
                missing = Some(*header);
            }
        }
    }
    match (missing_count, missing) {
        (0, _) => DecodeOutcome::Redundant,
        (1, Some(header)) => DecodeOutcome::Recovered(NativePacket { header, payload }),
        (n, _) => DecodeOutcome::Failure { missing: n },
    }
}

/// Queue positions to combine into the next frame, head first.
///
/// Starts from the head and walks the rest of the queue once, adding a packet
/// when its next hop is new, that next hop is believed to hold every packet
/// already chosen, and every chosen next hop is believed to hold it.
pub fn plan_coding_set(queue: &[PacketHeader], holds: impl Fn(NodeId, PacketId) -> bool) -> Vec<usize> {
    if queue.is_empty() {
        return Vec::new();
    }
    let mut chosen = alloc::vec![0usize];
    for (i, candidate) in queue.iter().enumerate().skip(1) {
        let fits = chosen.iter().all(|&c| {
            let picked = &queue[c];
            picked.next_hop != candidate.next_hop
                && holds(picked.next_hop, candidate.id)
                && holds(candidate.next_hop, picked.id)
        });
        if fits {
            chosen.push(i);
        }
    }
    chosen
}

/// Pops the planned packets out of `queue` and builds the frame. Falls back to
/// the native head if fewer than two packets qualify.
pub fn select_coding_set(
    queue: &mut VecDeque<NativePacket>,
    holds: impl Fn(NodeId, PacketId) -> bool,
) -> Option<Frame> {
    let headers: Vec<PacketHeader> = queue.iter().map(|p| p.header).collect();
    let plan = plan_coding_set(&headers, holds);
    take_planned(queue, &plan, |p| p)
}

pub(crate) fn take_planned<T>(
    queue: &mut VecDeque<T>,
    plan: &[usize],
    into_packet: impl Fn(T) -> NativePacket,
) -> Option<Frame> {
    if plan.is_empty() {
        return None;
    }
    // remove from the back so earlier indices stay valid
    let mut sorted = plan.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let mut taken: BTreeMap<usize, NativePacket> = BTreeMap::new();
    for i in sorted {
        let item = queue.remove(i).expect("planned index inside queue");
        taken.insert(i, into_packet(item));
    }
    let packets: Vec<NativePacket> = plan.iter().map(|i| taken.remove(i).unwrap()).collect();
    if packets.len() == 1 {
        return packets.into_iter().next().map(Frame::Native);
    }
    Some(Frame::Coded(encode(&packets).expect("plan respects coding invariants")))
}

/// An opportunistically overheard packet waiting to prove useful.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverheardEntry {
    pub packet: NativePacket,
    pub overheard_at: Slot,
    /// Number of coded frames this packet has shown up in.
    pub psi: u32,
    /// Decision epoch at which it was overheard, if an agent decided it.
    pub epoch: Option<u64>,
    pub expiry: Slot,
}

impl OverheardEntry {
    pub fn is_live(&self, slot: Slot) -> bool {
        self.overheard_at <= slot && slot <= self.expiry
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Credit {
    pub id: PacketId,
    pub epoch: Option<u64>,
    /// Participation count after this credit.
    pub psi: u32,
}

/// Overheard packets with FIFO eviction and an aging deadline of `alpha` slots.
#[derive(Debug, Clone)]
pub struct OverheardPool {
    entries: VecDeque<OverheardEntry>,
    capacity: usize,
    alpha: Slot,
}

impl OverheardPool {
    pub fn new(capacity: usize, alpha: Slot) -> Self {
        Self {
            entries: VecDeque::new(),
            capacity: capacity.max(1),
            alpha,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: PacketId) -> bool {
        self.entries.iter().any(|e| e.packet.id() == id)
    }

    pub fn get(&self, id: PacketId) -> Option<&OverheardEntry> {
        self.entries.iter().find(|e| e.packet.id() == id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &OverheardEntry> {
        self.entries.iter()
    }

    /// Stores `packet` unless it is already pooled. Returns the entry pushed
    /// out by the capacity limit, if any.
    pub fn insert(&mut self, packet: NativePacket, slot: Slot, epoch: Option<u64>) -> Option<OverheardEntry> {
        if self.contains(packet.id()) {
            return None;
        }
        let evicted = if self.entries.len() >= self.capacity {
            self.entries.pop_front()
        } else {
            None
        };
        self.entries.push_back(OverheardEntry {
            packet,
            overheard_at: slot,
            psi: 0,
            epoch,
            expiry: slot + self.alpha,
        });
        evicted
    }

    /// Credits a coded frame seen at `slot`: every live entry among its
    /// constituents gets one more participation. One [`Credit`] per hit.
    pub fn credit(&mut self, constituents: &[PacketHeader], slot: Slot) -> Vec<Credit> {
        let mut credited = Vec::new();
        for h in constituents {
            if let Some(entry) = self.entries.iter_mut().find(|e| e.packet.id() == h.id) {
                if entry.is_live(slot) {
                    entry.psi += 1;
                    credited.push(Credit {
                        id: h.id,
                        epoch: entry.epoch,
                        psi: entry.psi,
                    });
                }
            }
        }
        credited
    }

    /// Drops entries past their deadline. Returns the ones that never took
    /// part in a coded frame.
    pub fn age(&mut self, slot: Slot) -> Vec<OverheardEntry> {
        let mut useless = Vec::new();
        self.entries.retain(|e| {
            if slot > e.expiry {
                if e.psi == 0 {
                    useless.push(e.clone());
                }
                false
            } else {
                true
            }
        });
        useless
    }

    pub fn drain(&mut self) -> impl Iterator<Item = OverheardEntry> + '_ {
        self.entries.drain(..)
    }
}

impl PacketLookup for OverheardPool {
    fn payload(&self, id: PacketId) -> Option<&[u8]> {
        self.get(id).map(|e| e.packet.payload.as_slice())
    }
}

/// Packets a node holds itself (generated, received or forwarded), kept for
/// the same horizon as overheard ones.
#[derive(Debug, Clone, Default)]
pub struct OwnStore {
    packets: BTreeMap<PacketId, (NativePacket, Slot)>,
}

impl OwnStore {
    pub fn insert(&mut self, packet: NativePacket, expires: Slot) {
        let id = packet.id();
        let entry = self.packets.entry(id).or_insert((packet, expires));
        entry.1 = entry.1.max(expires);
    }

    pub fn contains(&self, id: PacketId) -> bool {
        self.packets.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn age(&mut self, slot: Slot) {
        self.packets.retain(|_, (_, exp)| slot <= *exp);
    }

    pub fn entries(&self) -> impl Iterator<Item = (PacketId, Slot)> + '_ {
        self.packets.iter().map(|(&id, (_, exp))| (id, *exp))
    }
}

impl PacketLookup for OwnStore {
    fn payload(&self, id: PacketId) -> Option<&[u8]> {
        self.packets.get(&id).map(|(p, _)| p.payload.as_slice())
    }
}

/// Own packets first, then the overheard pool.
pub struct Holdings<'a> {
    pub own: &'a OwnStore,
    pub pool: &'a OverheardPool,
}

impl PacketLookup for Holdings<'_> {
    fn payload(&self, id: PacketId) -> Option<&[u8]> {
        self.own.payload(id).or_else(|| self.pool.payload(id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub id: PacketId,
    /// Last slot the sender will still hold the packet.
    pub expires: Slot,
}

/// A node's list of packets it currently holds.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ReceptionReport {
    pub from: Option<NodeId>,
    pub entries: Vec<ReportEntry>,
}

impl ReceptionReport {
    pub fn ids(&self) -> impl Iterator<Item = PacketId> + '_ {
        self.entries.iter().map(|e| e.id)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Report listing every live packet in the pool and the own store.
pub fn emit_reception_report(node: NodeId, own: &OwnStore, pool: &OverheardPool, slot: Slot) -> ReceptionReport {
    let mut entries: BTreeMap<PacketId, Slot> = BTreeMap::new();
    for (id, exp) in own.entries() {
        if slot <= exp {
            entries.insert(id, exp);
        }
    }
    for e in pool.entries() {
        if e.is_live(slot) {
            let exp = entries.entry(e.packet.id()).or_insert(e.expiry);
            *exp = (*exp).max(e.expiry);
        }
    }
    ReceptionReport {
        from: Some(node),
        entries: entries.into_iter().map(|(id, expires)| ReportEntry { id, expires }).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
struct NeighborKnowledge {
    packets: BTreeMap<PacketId, Slot>,
    fresh: Slot,
}

/// What each neighbor is believed to hold, per the last report heard from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeTable {
    neighbors: BTreeMap<NodeId, NeighborKnowledge>,
    horizon: Slot,
}

impl KnowledgeTable {
    pub fn new(horizon: Slot) -> Self {
        Self {
            neighbors: BTreeMap::new(),
            horizon,
        }
    }

    /// Replaces everything known about `neighbor` with `report`.
    pub fn update(&mut self, neighbor: NodeId, report: &ReceptionReport, slot: Slot) {
        let packets = report.entries.iter().map(|e| (e.id, e.expires)).collect();
        self.neighbors.insert(neighbor, NeighborKnowledge { packets, fresh: slot });
    }

    /// Forgets reports older than the horizon and packets past their expiry.
    pub fn prune(&mut self, slot: Slot) {
        let horizon = self.horizon;
        self.neighbors.retain(|_, k| slot <= k.fresh + horizon);
        for k in self.neighbors.values_mut() {
            k.packets.retain(|_, exp| slot <= *exp);
        }
    }

    pub fn holds(&self, neighbor: NodeId, id: PacketId, slot: Slot) -> bool {
        self.neighbors.get(&neighbor).is_some_and(|k| {
            slot <= k.fresh + self.horizon && k.packets.get(&id).is_some_and(|&exp| slot <= exp)
        })
    }

    pub fn known_ids(&self, neighbor: NodeId) -> BTreeSet<PacketId> {
        self.neighbors
            .get(&neighbor)
            .map(|k| k.packets.keys().copied().collect())
            .unwrap_or_default()
    }

    pub fn freshness(&self, neighbor: NodeId) -> Option<Slot> {
        self.neighbors.get(&neighbor).map(|k| k.fresh)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn header(id: u64, next_hop: u32) -> PacketHeader {
        PacketHeader {
            id: PacketId(id),
            flow: 0,
            source: NodeId(0),
            destination: NodeId(next_hop),
            next_hop: NodeId(next_hop),
            created: 0,
        }
    }

    fn packet(id: u64, next_hop: u32, fill: u8) -> NativePacket {
        NativePacket {
            header: header(id, next_hop),
            payload: (0..16u8).map(|i| i.wrapping_mul(fill).wrapping_add(id as u8)).collect(),
        }
    }

    #[test]
    fn xor_pair_round_trip() {
        let a = packet(1, 2, 3);
        let b = packet(2, 3, 7);
        let coded = encode(&[a.clone(), b.clone()]).unwrap();
        let mut bytes = coded.payload().to_vec();
        xor_into(&mut bytes, &a.payload);
        assert_eq!(bytes, b.payload);
        assert_eq!(decode(&coded, &[a.clone()][..]), DecodeOutcome::Recovered(b.clone()));
    }

    #[test]
    fn degree_three_payload_is_triple_xor() {
        let (a, b, c) = (packet(1, 1, 3), packet(2, 2, 5), packet(3, 3, 11));
        let coded = encode(&[a.clone(), b.clone(), c.clone()]).unwrap();
        assert_eq!(coded.degree(), 3);
        let oracle: Vec<u8> = (0..16).map(|i| a.payload[i] ^ b.payload[i] ^ c.payload[i]).collect();
        assert_eq!(coded.payload(), oracle.as_slice());
        assert_eq!(decode(&coded, &[a, c][..]), DecodeOutcome::Recovered(b));
    }

    #[test]
    fn encode_rejects_invalid_sets() {
        assert_eq!(encode(&[packet(1, 1, 1)]), Err(CodingError::TooFewPackets(1)));
        assert_eq!(
            encode(&[packet(1, 4, 1), packet(2, 4, 2)]),
            Err(CodingError::DuplicateNextHop(NodeId(4)))
        );
        let mut short = packet(2, 5, 2);
        short.payload.pop();
        assert!(matches!(encode(&[packet(1, 4, 1), short]), Err(CodingError::SizeMismatch(16, 15))));
    }

    #[test]
    fn decode_failure_and_redundant() {
        let (a, b) = (packet(1, 2, 3), packet(2, 3, 7));
        let coded = encode(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(decode(&coded, &[][..]), DecodeOutcome::Failure { missing: 2 });
        assert_eq!(decode(&coded, &[a, b][..]), DecodeOutcome::Redundant);
    }

    #[test]
    fn fig1_relay_codes_the_pair() {
        // R holds p_a -> n2 and p_b -> n3; n2 generated p_b, n3 overheard p_a
        let mut queue: VecDeque<NativePacket> = vec![packet(10, 2, 1), packet(11, 3, 2)].into();
        let holds = |n: NodeId, id: PacketId| matches!((n.0, id.0), (2, 11) | (3, 10));
        match select_coding_set(&mut queue, holds) {
            Some(Frame::Coded(c)) => {
                assert_eq!(c.degree(), 2);
                assert_eq!(c.constituents()[0].id, PacketId(10));
            }
            other => panic!("expected coded frame, got {other:?}"),
        }
        assert!(queue.is_empty());
    }

    #[test]
    fn lone_packet_goes_native() {
        let mut queue: VecDeque<NativePacket> = vec![packet(10, 2, 1)].into();
        assert!(matches!(select_coding_set(&mut queue, |_, _| true), Some(Frame::Native(p)) if p.id() == PacketId(10)));
        assert!(select_coding_set(&mut queue, |_, _| true).is_none());
    }

    #[test]
    fn unknowing_next_hop_blocks_coding() {
        let mut queue: VecDeque<NativePacket> = vec![packet(10, 2, 1), packet(11, 3, 2)].into();
        let frame = select_coding_set(&mut queue, |n, _| n == NodeId(2)).unwrap();
        assert!(matches!(frame, Frame::Native(_)));
        assert_eq!(queue.len(), 1);
    }

    #[test]
    fn usefulness_window_and_psi() {
        let mut pool = OverheardPool::new(64, 50);
        pool.insert(packet(7, 9, 1), 10, Some(3));
        let first = pool.credit(&[header(7, 1), header(8, 2)], 40);
        assert_eq!(first.iter().map(|c| (c.epoch, c.psi)).collect::<Vec<_>>(), vec![(Some(3), 1)]);
        let second = pool.credit(&[header(7, 1), header(9, 2)], 55);
        assert_eq!(second.iter().map(|c| (c.epoch, c.psi)).collect::<Vec<_>>(), vec![(Some(3), 2)]);
        assert_eq!(pool.get(PacketId(7)).unwrap().psi, 2);
        assert!(pool.credit(&[header(7, 1), header(9, 2)], 61).is_empty());
    }

    #[test]
    fn second_coded_hit_inside_window_counts_again() {
        let mut pool = OverheardPool::new(64, 50);
        pool.insert(packet(7, 9, 1), 10, Some(3));
        pool.credit(&[header(7, 1), header(8, 2)], 40);
        pool.credit(&[header(7, 1), header(9, 2)], 60);
        assert_eq!(pool.get(PacketId(7)).unwrap().psi, 2);
    }

    #[test]
    fn aging_reports_only_useless_entries() {
        let mut pool = OverheardPool::new(64, 50);
        assert!(pool.age(0).is_empty());
        pool.insert(packet(1, 9, 1), 10, Some(0));
        pool.insert(packet(2, 9, 1), 10, Some(1));
        pool.credit(&[header(2, 1), header(5, 2)], 20);
        assert!(pool.age(60).is_empty());
        let useless = pool.age(61);
        assert_eq!(useless.len(), 1);
        assert_eq!(useless[0].packet.id(), PacketId(1));
        assert_eq!(useless[0].psi, 0);
        assert!(pool.is_empty());
    }

    #[test]
    fn expired_entry_gets_no_credit() {
        let mut pool = OverheardPool::new(64, 50);
        pool.insert(packet(1, 9, 1), 10, Some(0));
        pool.age(61);
        assert!(pool.credit(&[header(1, 1), header(5, 2)], 61).is_empty());
    }

    #[test]
    fn pool_capacity_evicts_oldest() {
        let mut pool = OverheardPool::new(2, 100);
        pool.insert(packet(1, 9, 1), 0, None);
        pool.insert(packet(2, 9, 1), 1, None);
        let evicted = pool.insert(packet(3, 9, 1), 2, None).unwrap();
        assert_eq!(evicted.packet.id(), PacketId(1));
        assert_eq!(pool.len(), 2);
        assert!(pool.insert(packet(3, 9, 1), 3, None).is_none());
    }

    #[test]
    fn report_and_knowledge() {
        let own = OwnStore::default();
        let mut pool = OverheardPool::new(8, 50);
        let empty = emit_reception_report(NodeId(3), &own, &pool, 0);
        assert!(empty.is_empty());
        pool.insert(packet(10, 2, 1), 0, None);
        let report = emit_reception_report(NodeId(3), &own, &pool, 1);
        assert_eq!(report.ids().collect::<Vec<_>>(), vec![PacketId(10)]);

        let mut table = KnowledgeTable::new(50);
        table.update(NodeId(3), &report, 1);
        assert_eq!(table.known_ids(NodeId(3)), [PacketId(10)].into_iter().collect());
        assert!(table.holds(NodeId(3), PacketId(10), 20));

        let mut second = report.clone();
        second.entries = vec![ReportEntry {
            id: PacketId(11),
            expires: 100,
        }];
        table.update(NodeId(3), &second, 5);
        assert!(!table.holds(NodeId(3), PacketId(10), 6));
        assert!(table.holds(NodeId(3), PacketId(11), 6));
        assert_eq!(table.freshness(NodeId(3)), Some(5));
    }

    #[test]
    fn stale_knowledge_is_pruned() {
        let mut table = KnowledgeTable::new(50);
        let report = ReceptionReport {
            from: Some(NodeId(1)),
            entries: vec![ReportEntry {
                id: PacketId(1),
                expires: 1000,
            }],
        };
        table.update(NodeId(1), &report, 0);
        assert!(table.holds(NodeId(1), PacketId(1), 50));
        assert!(!table.holds(NodeId(1), PacketId(1), 51));
        table.prune(51);
        assert!(table.known_ids(NodeId(1)).is_empty());
    }
}
