use codesleep_core::agent::{Action, Agent, AgentState, Exploration, LearningParams, Quantizer, RewardEvent, TimeUnit};
use codesleep_core::oracle::{
    delayed_benchmark, greedy_policy, synthetic_state, train_synthetic, value_iteration, RewardDelay, SyntheticSmdp,
};
use codesleep_core::rng::stream_rng;
use proptest::prelude::*;
use rand::Rng;

fn params(theta_max: usize, beta: f64, epsilon: f64) -> LearningParams {
    LearningParams {
        beta,
        gamma: 0.9,
        theta_max,
        exploration: Exploration {
            start: epsilon,
            end: epsilon,
            horizon: 0,
        },
        time_unit: TimeUnit::Slots(1.0),
    }
}

/// Plain continuous-time Q-learning on a `[state][action]` table.
struct Reference {
    q: Vec<[f64; 2]>,
    beta: f64,
    gamma: f64,
}

impl Reference {
    fn update(&mut self, s: usize, a: usize, r: f64, dt: f64, next: usize) {
        let best = self.q[next][0].max(self.q[next][1]);
        let target = r + (-self.gamma * dt).exp() * best;
        self.q[s][a] += self.beta * (target - self.q[s][a]);
    }
}

#[test]
fn zero_delay_matches_plain_q_learning_exactly() {
    let quantizer = Quantizer {
        energy_levels: 3,
        degree_levels: 2,
        history: 1,
    };
    let p = params(0, 0.3, 0.0);
    let mut agent = Agent::new(&quantizer, p);
    let mut reference = Reference {
        q: vec![[0.0; 2]; 6],
        beta: p.beta,
        gamma: p.gamma,
    };
    let mut rng = stream_rng(7, 99);
    let state_of = |i: usize| AgentState {
        energy: (i / 2 + 1) as u8,
        degree: (i % 2 + 1) as u8,
    };
    let mut prev: Option<(usize, usize, f64, f64)> = None;
    let mut at = 0.0;
    for t in 0..1000u64 {
        let s = rng.random_range(0..6);
        let rewards: Vec<RewardEvent> = match prev {
            Some((_, _, r, _)) => vec![RewardEvent {
                amount: r,
                epoch: t - 1,
                arrival: at as u64,
            }],
            None => Vec::new(),
        };
        agent.learn(state_of(s), at, &rewards);
        if let Some((ps, pa, r, pat)) = prev {
            reference.update(ps, pa, r, at - pat, s);
        }
        let a = rng.random_range(0..2);
        agent.commit(state_of(s), at, Action::from_index(a));
        let r: f64 = rng.random_range(-1.0..1.0);
        prev = Some((s, a, r, at));
        at += f64::from(rng.random_range(1..6u32));
        for (i, row) in reference.q.iter().enumerate() {
            for (a, v) in row.iter().enumerate() {
                assert_eq!(agent.table().get(state_of(i), Action::from_index(a), 0), *v, "epoch {t}");
            }
        }
    }
}

#[test]
fn delayed_benchmark_matches_value_iteration() {
    for theta in [0usize, 2, 5] {
        let m = delayed_benchmark(theta);
        let opt = value_iteration(&m, 0.9, 1e-12).unwrap().policy;
        for seed in 0..3 {
            let table = train_synthetic(&m, params(8, 0.05, 1.0), 30_000, seed).unwrap();
            assert_eq!(greedy_policy(&table, m.states()), opt, "theta {theta} seed {seed}");
            for (s, &a) in opt.iter().enumerate() {
                assert_eq!(table.best_delay(synthetic_state(s), Action::from_index(a)), theta);
            }
        }
    }
}

#[test]
fn poisson_delays_still_find_the_better_action() {
    let mut m = delayed_benchmark(0);
    m.delay = RewardDelay::Poisson(1.0);
    let opt = value_iteration(&m, 0.9, 1e-12).unwrap().policy;
    let table = train_synthetic(&m, params(8, 0.05, 1.0), 40_000, 3).unwrap();
    // only the states whose good action is also the high-reward one
    let got = greedy_policy(&table, m.states());
    assert_eq!(&got[1..], &opt[1..]);
}

fn three_state() -> SyntheticSmdp {
    SyntheticSmdp {
        transitions: vec![
            vec![vec![0.2, 0.5, 0.3], vec![0.6, 0.2, 0.2]],
            vec![vec![0.1, 0.1, 0.8], vec![0.3, 0.4, 0.3]],
            vec![vec![0.5, 0.25, 0.25], vec![0.1, 0.7, 0.2]],
        ],
        sojourn: vec![vec![1.0, 0.5], vec![2.0, 1.0], vec![0.7, 1.5]],
        reward: vec![vec![0.3, -0.2], vec![1.0, 0.4], vec![-0.5, 0.8]],
        delay: RewardDelay::Fixed(0),
    }
}

#[test]
fn value_iteration_agrees_with_monte_carlo() {
    let m = three_state();
    let gamma = 0.9;
    let sol = value_iteration(&m, gamma, 1e-12).unwrap();
    let mut rng = stream_rng(11, 5);
    let runs = 20_000;
    for start in 0..m.states() {
        let mut total = 0.0;
        for _ in 0..runs {
            let mut s = start;
            let mut elapsed = 0.0;
            let mut ret = 0.0;
            while elapsed < 40.0 {
                let a = sol.policy[s];
                ret += (-gamma * elapsed).exp() * m.reward[s][a];
                elapsed += m.sojourn[s][a];
                s = m.step(s, a, &mut rng);
            }
            total += ret;
        }
        let estimate = total / runs as f64;
        let exact = sol.q[start][sol.policy[start]];
        assert!(
            (estimate - exact).abs() < 0.02 * exact.abs(),
            "state {start}: {estimate} vs {exact}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn values_stay_within_the_reward_bound(
        seed in any::<u64>(),
        beta in 0.01f64..=1.0,
        theta in 0usize..5,
    ) {
        let quantizer = Quantizer { energy_levels: 2, degree_levels: 2, history: 1 };
        let mut agent = Agent::new(&quantizer, params(theta, beta, 0.5));
        let mut rng = stream_rng(seed, 1);
        let gamma: f64 = 0.9;
        let bound = 1.0 / (1.0 - (-gamma).exp());
        let mut at = 0.0;
        for t in 0..300u64 {
            let s = AgentState { energy: rng.random_range(1..=2), degree: rng.random_range(1..=2) };
            let r = RewardEvent { amount: rng.random_range(-1.0..=1.0), epoch: t, arrival: 0 };
            agent.on_epoch(s, at, &[r], &mut rng);
            at += f64::from(rng.random_range(1..4u32));
        }
        for v in agent.table().values() {
            prop_assert!(v.is_finite() && v.abs() <= bound + 1e-9);
        }
    }
}
