//! Property checks shared by the proptest suite and the acceptance run.
#![allow(dead_code)]

use codesleep_core::agent::{Agent, LearningParams, Quantizer};
use codesleep_core::coding::{decode, encode, DecodeOutcome, NativePacket, PacketHeader, PacketId};
use codesleep_core::config::{PolicyKind, TopologySpec};
use codesleep_core::mac::Simulation;
use codesleep_core::metrics::coding_gain;
use codesleep_core::oracle::FixedPolicy;
use codesleep_core::rng::stream_rng;
use codesleep_core::world::{expected_epoch_gap, random_topology, TrafficRates};
use codesleep_core::{NodeId, ScenarioConfig};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::Rng;
use rand_distr::{Distribution, Exp};

pub type Check = Result<(), TestCaseError>;

pub fn header(id: u64, next_hop: u32) -> PacketHeader {
    PacketHeader {
        id: PacketId(id),
        flow: 0,
        source: NodeId(0),
        destination: NodeId(next_hop),
        next_hop: NodeId(next_hop),
        created: 0,
    }
}

pub fn small_config(seed: u64, policy: u8, flows: usize, gap: f64) -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.seed = seed;
    c.duration = 120;
    c.topology = TopologySpec::Random {
        nodes: 6,
        width: 350.0,
        height: 350.0,
        radius: 200.0,
    };
    c.traffic.flow_count = flows;
    c.traffic.mean_gap = gap;
    c.energy.capacity = 4e-6;
    c.policy = match policy {
        0 => PolicyKind::Learned,
        1 => PolicyKind::Fixed(FixedPolicy::AlwaysOverhear),
        2 => PolicyKind::Fixed(FixedPolicy::AlwaysSleep),
        _ => PolicyKind::Fixed(FixedPolicy::RandomP(0.5)),
    };
    c
}

pub fn xor_input() -> impl Strategy<Value = (usize, usize, u64, usize)> {
    (2usize..=4, 1usize..600, any::<u64>(), 0usize..4)
}

pub fn xor_round_trip((degree, len, seed, lost): (usize, usize, u64, usize)) -> Check {
    let mut rng = stream_rng(seed, 0);
    let packets: Vec<NativePacket> = (0..degree)
        .map(|i| NativePacket {
            header: header(i as u64, i as u32 + 1),
            payload: (0..len).map(|_| rng.random()).collect(),
        })
        .collect();
    let coded = encode(&packets).unwrap();
    let lost = lost % degree;
    let known: Vec<NativePacket> = packets
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != lost)
        .map(|(_, p)| p.clone())
        .collect();
    match decode(&coded, known.as_slice()) {
        DecodeOutcome::Recovered(p) => prop_assert_eq!(p, packets[lost].clone()),
        other => prop_assert!(false, "unexpected {:?}", other),
    }
    Ok(())
}

pub fn run_input() -> impl Strategy<Value = (u64, u8, usize, f64)> {
    (any::<u64>(), 0u8..4, 0usize..5, 1.0f64..8.0)
}

pub fn energy_ledger_balances((seed, policy, flows, gap): (u64, u8, usize, f64)) -> Check {
    let c = small_config(seed, policy, flows, gap);
    let mut sim = Simulation::new(&c).unwrap();
    sim.run_to_end();
    for node in &sim.world().nodes {
        let e = &node.energy;
        prop_assert!((e.spent() - e.charged(&c.energy)).abs() <= 1e-12);
        prop_assert!(e.residual >= 0.0 && e.residual <= c.energy.capacity);
    }
    Ok(())
}

pub fn coding_gain_at_least_one((seed, policy, flows, gap): (u64, u8, usize, f64)) -> Check {
    let r = codesleep_core::run(&small_config(seed, policy, flows, gap)).unwrap();
    let g = coding_gain(&r);
    prop_assert!(g.value >= 1.0);
    prop_assert_eq!(g.defined, r.data_transmissions > 0);
    prop_assert_eq!(g.value == 1.0, r.coded_transmissions == 0);
    Ok(())
}

pub fn table_input() -> impl Strategy<Value = (u8, u8, usize)> {
    (1u8..=16, 1u8..=16, 0usize..=12)
}

pub fn q_table_size((e, g, theta): (u8, u8, usize)) -> Check {
    let params = LearningParams {
        theta_max: theta,
        ..LearningParams::default()
    };
    let agent = Agent::new(
        &Quantizer {
            energy_levels: e,
            degree_levels: g,
            history: 5,
        },
        params,
    );
    prop_assert_eq!(agent.table().len(), usize::from(e) * usize::from(g) * 2 * (theta + 1));
    Ok(())
}

pub fn topology_input() -> impl Strategy<Value = (usize, f64, f64, u64)> {
    (1usize..40, 10.0f64..1000.0, 1.0f64..400.0, any::<u64>())
}

pub fn neighbors_symmetric((n, side, radius, seed): (usize, f64, f64, u64)) -> Check {
    let t = random_topology(n, side, side, radius, seed).unwrap();
    for a in t.nodes() {
        for b in t.nodes() {
            let near = a != b && t.distance(a, b) <= radius;
            prop_assert_eq!(t.are_neighbors(a, b), near);
            prop_assert_eq!(t.are_neighbors(a, b), t.are_neighbors(b, a));
        }
    }
    Ok(())
}

pub fn repeat_input() -> impl Strategy<Value = (u64, u8, usize)> {
    (any::<u64>(), 0u8..4, 1usize..5)
}

pub fn repeated_seed_repeats((seed, policy, flows): (u64, u8, usize)) -> Check {
    let c = small_config(seed, policy, flows, 3.0);
    let a = codesleep_core::run(&c).unwrap();
    let b = codesleep_core::run(&c).unwrap();
    prop_assert_eq!(a.trace_hash, b.trace_hash);
    prop_assert_eq!(a, b);
    Ok(())
}

pub fn epoch_gap_matches_poisson(seed: u64) -> Check {
    let mut rng = stream_rng(seed, 3);
    let topology = random_topology(6, 300.0, 300.0, 200.0, seed).unwrap();
    let mut rates = TrafficRates::new();
    let mut links = Vec::new();
    for i in topology.nodes() {
        for &j in topology.neighbors(i) {
            if rng.random_bool(0.6) {
                let rate = rng.random_range(0.05..2.0);
                rates.set(&topology, i, j, rate).unwrap();
                links.push((i, j, rate));
            }
        }
    }
    let node = NodeId(rng.random_range(0..6));
    let Ok(expected) = expected_epoch_gap(&topology, &rates, node) else {
        return Ok(());
    };
    // merged Poisson process over all links; keep events node could overhear
    let total: f64 = links.iter().map(|l| l.2).sum();
    let clock = Exp::new(total).unwrap();
    let (mut now, mut last, mut gaps, mut events) = (0.0, 0.0, 0.0, 0u32);
    while events < 10_000 {
        now += clock.sample(&mut rng);
        let mut pick = rng.random::<f64>() * total;
        let mut link = links[links.len() - 1];
        for l in &links {
            if pick < l.2 {
                link = *l;
                break;
            }
            pick -= l.2;
        }
        let (i, j, _) = link;
        if topology.are_neighbors(node, i) && j != node {
            gaps += now - last;
            last = now;
            events += 1;
        }
    }
    let mean = gaps / f64::from(events);
    prop_assert!((mean - expected).abs() <= 0.05 * expected, "{} vs {}", mean, expected);
    Ok(())
}
