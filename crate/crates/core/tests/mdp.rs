mod common;

use common::{random_acyclic_mdp, random_mdp, random_reward, rng};
use iavi::mdp::{
    boltzmann_policy, expected_value_difference, policy_evaluation, sample_trajectories, topological_state_order,
    value_iteration, PolicyTable, QTable, StateOrder, TabularMdp,
};
use proptest::prelude::*;
use rand::Rng;

fn bellman_residual(mdp: &TabularMdp, reward: &iavi::mdp::RewardTable, q: &QTable) -> f64 {
    let v = q.state_max();
    let mut worst = 0.0f64;
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let next: f64 = if mdp.is_terminal(s) {
                0.0
            } else {
                mdp.successors(s, a).iter().map(|&(n, p)| p * v[n]).sum::<f64>() * mdp.gamma()
            };
            worst = worst.max((reward.get(s, a) + next - q.get(s, a)).abs());
        }
    }
    worst
}

#[test]
fn value_iteration_residual_on_random_models() {
    let mut r = rng(11);
    for _ in 0..100 {
        let n = r.random_range(2..30);
        let m = r.random_range(2..6);
        let gamma = r.random_range(0.5..0.95);
        let mdp = if r.random_bool(0.5) {
            random_mdp(&mut r, n, m, gamma)
        } else {
            random_acyclic_mdp(&mut r, n, m, gamma)
        };
        let reward = random_reward(&mut r, n, m, 2.0);
        let q = value_iteration(&mdp, &reward, 1e-10, 100_000).unwrap();
        assert!(bellman_residual(&mdp, &reward, &q) <= 1e-9);
    }
}

#[test]
fn terminal_rows_hold_the_reward() {
    let mut r = rng(3);
    let mdp = random_acyclic_mdp(&mut r, 12, 3, 0.9);
    let reward = random_reward(&mut r, 12, 3, 1.0);
    let q = value_iteration(&mdp, &reward, 1e-12, 10_000).unwrap();
    for s in (0..12).filter(|&s| mdp.is_terminal(s)) {
        assert_eq!(q.row(s), reward.row(s));
    }
}

#[test]
fn evd_of_true_reward_is_zero() {
    let mut r = rng(5);
    for _ in 0..10 {
        let mdp = random_mdp(&mut r, 10, 3, 0.9);
        let reward = random_reward(&mut r, 10, 3, 1.0);
        let evd = expected_value_difference(&mdp, &reward, &reward).unwrap();
        assert!(evd.abs() < 1e-9, "{evd}");
    }
}

#[test]
fn evd_of_uniform_policy_matches_hand_value() {
    // Two states, both absorbing via stay/move; reward only for staying in 1.
    let mdp = TabularMdp::new(
        2,
        2,
        vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(1, 1.0)], vec![(0, 1.0)]],
        vec![false, false],
        0.5,
    )
    .unwrap();
    let reward = iavi::mdp::RewardTable::from_values(2, 2, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
    let uniform = PolicyTable::uniform(2, 2);
    let v = policy_evaluation(&mdp, &reward, &uniform, 1e-13).unwrap();
    // V0 = 0.5 * 0.5 * (V0 + V1), V1 = 0.5 * (1 + 0.5 V1) + 0.5 * 0.5 V0.
    let (a, b) = (v[0], v[1]);
    assert!((a - 0.25 * (a + b)).abs() < 1e-10);
    assert!((b - (0.5 + 0.25 * b + 0.25 * a)).abs() < 1e-10);
}

#[test]
fn sampling_is_deterministic_per_seed() {
    let mut r = rng(9);
    let mdp = random_mdp(&mut r, 15, 4, 0.9);
    let q = value_iteration(&mdp, &random_reward(&mut r, 15, 4, 1.0), 1e-10, 10_000).unwrap();
    let pi = boltzmann_policy(&q);
    let a = sample_trajectories(&mdp, &pi, 50, 10, 7).unwrap();
    let b = sample_trajectories(&mdp, &pi, 50, 10, 7).unwrap();
    let c = sample_trajectories(&mdp, &pi, 50, 10, 8).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    a.validate_against(&mdp).unwrap();
}

#[test]
fn episodes_stop_at_terminals() {
    let mut r = rng(21);
    let mdp = random_acyclic_mdp(&mut r, 20, 3, 0.9);
    let pi = PolicyTable::uniform(20, 3);
    let demos = sample_trajectories(&mdp, &pi, 200, 50, 1).unwrap();
    for ep in &demos.episodes {
        for (i, step) in ep.iter().enumerate() {
            assert_eq!(step.done, mdp.is_terminal(step.state));
            if step.done {
                assert_eq!(i, ep.len() - 1);
            }
        }
    }
}

#[test]
fn topological_order_respects_edges() {
    let mut r = rng(17);
    for _ in 0..50 {
        let n = r.random_range(2..40);
        let mdp = random_acyclic_mdp(&mut r, n, 3, 0.9);
        let StateOrder::Acyclic(order) = topological_state_order(&mdp) else {
            panic!("acyclic model reported cyclic");
        };
        assert_eq!(order.len(), n);
        let mut pos = vec![usize::MAX; n];
        for (i, &s) in order.iter().enumerate() {
            pos[s] = i;
        }
        for s in 0..n {
            for a in 0..3 {
                for &(next, _) in mdp.successors(s, a) {
                    assert!(pos[next] < pos[s], "successor {next} after {s}");
                }
            }
        }
    }
}

#[test]
fn self_loop_is_cyclic() {
    let mdp = TabularMdp::new(2, 1, vec![vec![(0, 0.5), (1, 0.5)], vec![]], vec![false, true], 0.9).unwrap();
    assert_eq!(topological_state_order(&mdp), StateOrder::Cyclic);
}

#[test]
fn rejects_bad_rows() {
    assert!(TabularMdp::new(1, 1, vec![vec![(0, 0.9)]], vec![false], 0.9).is_err());
    assert!(TabularMdp::new(1, 1, vec![vec![(3, 1.0)]], vec![false], 0.9).is_err());
    assert!(TabularMdp::new(1, 1, vec![vec![(0, 1.0)]], vec![false], 1.5).is_err());
}

proptest! {
    #[test]
    fn boltzmann_is_shift_invariant(values in prop::collection::vec(-20.0f64..20.0, 12), shifts in prop::collection::vec(-50.0f64..50.0, 4)) {
        let q = QTable::from_values(4, 3, values.clone()).unwrap();
        let shifted = QTable::from_fn(4, 3, |s, a| values[s * 3 + a] + shifts[s]);
        let p = boltzmann_policy(&q);
        let p2 = boltzmann_policy(&shifted);
        for (x, y) in p.probs().iter().zip(p2.probs()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        for s in 0..4 {
            let total: f64 = p.row(s).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(p.row(s).iter().all(|&x| x > 0.0));
        }
    }
}
