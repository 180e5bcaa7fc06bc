use std::collections::{BTreeMap, BTreeSet};

use codesleep_core::coding::{plan_coding_set, PacketHeader};
use codesleep_core::config::{PolicyKind, TopologySpec};
use codesleep_core::mac::{Mode, Simulation};
use codesleep_core::oracle::FixedPolicy;
use codesleep_core::world::{build_topology, Point};
use codesleep_core::{NodeId, ScenarioConfig};
use proptest::prelude::*;

mod common;
use common::*;

// the acceptance run repeats these at 10 000 cases each
proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn xor_round_trip_is_bit_exact(input in xor_input()) {
        xor_round_trip(input)?;
    }

    #[test]
    fn energy_ledger_balances(input in run_input()) {
        common::energy_ledger_balances(input)?;
    }

    #[test]
    fn coding_gain_is_at_least_one(input in run_input()) {
        coding_gain_at_least_one(input)?;
    }

    #[test]
    fn q_table_has_one_entry_per_state_action_and_delay(input in table_input()) {
        q_table_size(input)?;
    }

    #[test]
    fn neighbors_are_symmetric_and_within_range(input in topology_input()) {
        neighbors_symmetric(input)?;
    }

    #[test]
    fn repeated_seed_repeats_the_trace(input in repeat_input()) {
        repeated_seed_repeats(input)?;
    }

    #[test]
    fn epoch_gap_matches_poisson_schedule(seed in any::<u64>()) {
        epoch_gap_matches_poisson(seed)?;
    }
}

/// Every valid coding set containing the head, enumerated.
fn valid_sets(queue: &[PacketHeader], holds: &BTreeSet<(u32, u64)>) -> Vec<Vec<usize>> {
    let n = queue.len();
    let mut out = Vec::new();
    for mask in 0u32..(1 << (n - 1)) {
        let set: Vec<usize> = std::iter::once(0)
            .chain((1..n).filter(|i| mask & (1 << (i - 1)) != 0))
            .collect();
        let ok = set.iter().all(|&a| {
            set.iter().all(|&b| {
                a == b
                    || (queue[a].next_hop != queue[b].next_hop
                        && holds.contains(&(queue[a].next_hop.0, queue[b].id.0)))
            })
        });
        if ok {
            out.push(set);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn coding_set_is_the_earliest_maximal_valid_set(
        hops in proptest::collection::vec(1u32..5, 1..7),
        pairs in proptest::collection::btree_set((1u32..5, 0u64..7), 0..25),
    ) {
        let queue: Vec<PacketHeader> = hops.iter().enumerate().map(|(i, &h)| header(i as u64, h)).collect();
        let plan = plan_coding_set(&queue, |nb, id| pairs.contains(&(nb.0, id.0)));
        let sets = valid_sets(&queue, &pairs);
        prop_assert!(sets.contains(&plan));
        // prefer earlier queue positions: compare membership index by index
        let key = |s: &Vec<usize>| (0..queue.len()).map(|i| !s.contains(&i)).collect::<Vec<bool>>();
        let best = sets.iter().min_by_key(|s| key(s)).unwrap();
        prop_assert_eq!(&plan, best);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn schedule_agrees_with_brute_force(seed in any::<u64>(), flows in 2usize..8) {
        let mut c = ScenarioConfig::default();
        c.seed = seed;
        c.duration = 150;
        c.topology = TopologySpec::Random { nodes: 8, width: 450.0, height: 450.0, radius: 200.0 };
        c.traffic.flow_count = flows;
        c.traffic.mean_gap = 2.0;
        c.policy = PolicyKind::Fixed(FixedPolicy::RandomP(0.5));
        let mut sim = Simulation::new(&c).unwrap();
        let positions: Vec<Point> = sim.world().topology.positions().to_vec();
        let near = |a: NodeId, b: NodeId| a == b || positions[a.index()].distance(&positions[b.index()]) <= 200.0;
        while let Some(out) = sim.step() {
            // replay the grants in candidate order
            let mut granted: Vec<(NodeId, Vec<NodeId>)> = Vec::new();
            let mut seen_report = false;
            for cand in &out.candidates {
                let is_report = out
                    .transmissions
                    .iter()
                    .find(|t| t.sender == cand.sender)
                    .is_some_and(|t| matches!(t.payload, codesleep_core::mac::Payload::Report));
                if cand.granted && !is_report {
                    prop_assert!(!seen_report, "data granted after a report");
                }
                seen_report |= is_report;
                let clash = granted.iter().any(|(g, g_rx)| {
                    cand.receivers.iter().any(|&r| near(*g, r)) || g_rx.iter().any(|&r| near(cand.sender, r))
                });
                prop_assert_eq!(cand.granted, !clash);
                if !clash {
                    granted.push((cand.sender, cand.receivers.clone()));
                }
            }
            let senders: Vec<NodeId> = out.transmissions.iter().map(|t| t.sender).collect();
            prop_assert_eq!(senders, granted.iter().map(|g| g.0).collect::<Vec<_>>());
            // modes from positions alone
            let receivers: BTreeMap<NodeId, NodeId> = out
                .transmissions
                .iter()
                .flat_map(|t| t.receivers.iter().map(move |&r| (r, t.sender)))
                .collect();
            for (v, mode) in out.modes.iter().enumerate() {
                let v = NodeId(v as u32);
                let Some(mode) = mode else { continue };
                let audible = out.transmissions.iter().filter(|t| t.sender != v && near(t.sender, v)).count();
                let expect: &[Mode] = if senders_contains(&out.transmissions, v) {
                    &[Mode::Send]
                } else if receivers.contains_key(&v) {
                    &[Mode::Receive]
                } else if audible == 1 {
                    &[Mode::Overhear, Mode::Sleep]
                } else {
                    &[Mode::Idle]
                };
                prop_assert!(expect.contains(mode), "node {} got {:?}, expected {:?}", v, mode, expect);
            }
        }
    }
}

fn senders_contains(txs: &[codesleep_core::mac::Transmission], v: NodeId) -> bool {
    txs.iter().any(|t| t.sender == v)
}

#[test]
fn explicit_topology_symmetry() {
    let pts = [Point::new(0.0, 0.0), Point::new(200.0, 0.0), Point::new(400.0, 0.0)];
    let t = build_topology(&pts, 200.0).unwrap();
    assert!(t.are_neighbors(NodeId(0), NodeId(1)) && t.are_neighbors(NodeId(1), NodeId(0)));
    assert!(!t.are_neighbors(NodeId(0), NodeId(2)));
}
