#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use iavi::mdp::{RewardTable, TabularMdp};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_row<R: Rng>(rng: &mut R, candidates: &[usize], max_support: usize) -> Vec<(usize, f64)> {
    let k = rng.random_range(1..=max_support.min(candidates.len()));
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, candidates.len(), k)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    picked.sort_unstable();
    let weights: Vec<f64> = picked.iter().map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    picked.into_iter().zip(weights).map(|(s, w)| (s, w / total)).collect()
}

/// Dense-ish random model with no terminals.
pub fn random_mdp<R: Rng>(rng: &mut R, n_states: usize, n_actions: usize, gamma: f64) -> TabularMdp {
    let all: Vec<usize> = (0..n_states).collect();
    let rows = (0..n_states * n_actions).map(|_| random_row(rng, &all, 3)).collect();
    TabularMdp::new(n_states, n_actions, rows, vec![false; n_states], gamma).unwrap()
}

/// Random model whose transitions only go to higher-indexed states; the last
/// state (and any state with no higher state reachable) is terminal. The
/// states are relabelled by a random permutation so that the order is not
/// simply the index order.
pub fn random_acyclic_mdp<R: Rng>(rng: &mut R, n_states: usize, n_actions: usize, gamma: f64) -> TabularMdp {
    let mut perm: Vec<usize> = (0..n_states).collect();
    for i in (1..n_states).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let mut rows = vec![Vec::new(); n_states * n_actions];
    let mut terminal = vec![false; n_states];
    for rank in 0..n_states {
        let s = perm[rank];
        let later: Vec<usize> = perm[rank + 1..].to_vec();
        let is_terminal = later.is_empty() || rng.random_bool(0.1);
        terminal[s] = is_terminal;
        if is_terminal {
            continue;
        }
        for a in 0..n_actions {
            rows[s * n_actions + a] = random_row(rng, &later, 3);
        }
    }
    TabularMdp::new(n_states, n_actions, rows, terminal, gamma).unwrap()
}

pub fn random_reward<R: Rng>(rng: &mut R, n_states: usize, n_actions: usize, scale: f64) -> RewardTable {
    RewardTable::from_fn(n_states, n_actions, |_, _| rng.random_range(-scale..scale))
}

/// KL(p ‖ q) for one pair of rows, written out independently of the library.
pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / b).ln())
        .sum()
}
