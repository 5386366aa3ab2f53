use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PolicyTable, Step, TabularMdp, TrajectorySet};
use crate::error::{Error, Result};

/// Draws an index from a discrete distribution given as `(index, weight)`
/// pairs. Falls back to the last entry when rounding leaves `u` uncovered.
pub(crate) fn draw_weighted<R: Rng + ?Sized>(rng: &mut R, items: impl Iterator<Item = (usize, f64)> + Clone) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (idx, w) in items {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = idx;
        if u < acc {
            return idx;
        }
    }
    last
}

/// Samples `episodes` episodes of at most `horizon` steps, starting states
/// drawn uniformly. Deterministic per seed.
pub fn sample_trajectories(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<TrajectorySet> {
    let uniform = vec![1.0 / mdp.n_states() as f64; mdp.n_states()];
    sample_trajectories_from(mdp, policy, &uniform, episodes, horizon, seed)
}

/// Like [`sample_trajectories`] with an explicit initial-state distribution.
///
/// An episode that reaches a terminal state records one final step there
/// with `done = true` and stops.
pub fn sample_trajectories_from(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    initial: &[f64],
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<TrajectorySet> {
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(Error::InvalidDimension("policy does not match model".into()));
    }
    if initial.len() != mdp.n_states() {
        return Err(Error::InvalidDimension(
            "initial distribution does not match model".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut episode = Vec::with_capacity(horizon);
        let mut state = draw_weighted(&mut rng, initial.iter().copied().enumerate());
        for _ in 0..horizon {
            let action = draw_weighted(&mut rng, policy.row(state).iter().copied().enumerate());
            if mdp.is_terminal(state) {
                episode.push(Step {
                    state,
                    action,
                    next_state: state,
                    done: true,
                });
                break;
            }
            let next_state = draw_weighted(&mut rng, mdp.successors(state, action).iter().copied());
            episode.push(Step {
                state,
                action,
                next_state,
                done: false,
            });
            state = next_state;
        }
        out.push(episode);
    }
    Ok(TrajectorySet {
        n_states: mdp.n_states(),
        n_actions: mdp.n_actions(),
        seed,
        horizon,
        episodes: out,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StateOrder {
    /// Every state appears after all of its successors; terminals first.
    Acyclic(Vec<usize>),
    /// The reachability graph has a cycle (self-loops included).
    Cyclic,
}

/// Reverse topological order of the successor graph. Terminal states have no
/// outgoing edges. Ties are broken by ascending state index.
#[allow(clippy::needless_range_loop)]
pub fn topological_state_order(mdp: &TabularMdp) -> StateOrder {
    let n = mdp.n_states();
    let mut out_degree = vec![0usize; n];
    let mut predecessors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for s in 0..n {
        if mdp.is_terminal(s) {
            continue;
        }
        let mut succ: Vec<usize> = (0..mdp.n_actions())
            .flat_map(|a| mdp.successors(s, a).iter().map(|&(next, _)| next))
            .collect();
        succ.sort_unstable();
        succ.dedup();
        if succ.contains(&s) {
            return StateOrder::Cyclic;
        }
        out_degree[s] = succ.len();
        for next in succ {
            predecessors[next].push(s);
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> = (0..n).filter(|&s| out_degree[s] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(s)) = ready.pop() {
        order.push(s);
        for &p in &predecessors[s] {
            out_degree[p] -= 1;
            if out_degree[p] == 0 {
                ready.push(Reverse(p));
            }
        }
    }
    if order.len() == n {
        StateOrder::Acyclic(order)
    } else {
        StateOrder::Cyclic
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain3() -> TabularMdp {
        TabularMdp::new(
            3,
            1,
            vec![vec![(1, 1.0)], vec![(2, 1.0)], vec![]],
            vec![false, false, true],
            0.9,
        )
        .unwrap()
    }

    #[test]
    fn linear_chain_order() {
        assert_eq!(topological_state_order(&chain3()), StateOrder::Acyclic(vec![2, 1, 0]));
    }

    #[test]
    fn self_loop_is_cyclic() {
        let mdp = TabularMdp::new(2, 1, vec![vec![(0, 0.5), (1, 0.5)], vec![]], vec![false, true], 0.9).unwrap();
        assert_eq!(topological_state_order(&mdp), StateOrder::Cyclic);
    }

    #[test]
    fn two_cycle_is_cyclic() {
        let mdp = TabularMdp::new(2, 1, vec![vec![(1, 1.0)], vec![(0, 1.0)]], vec![false, false], 0.9).unwrap();
        assert_eq!(topological_state_order(&mdp), StateOrder::Cyclic);
    }

    #[test]
    fn zero_episodes_is_empty() {
        let pi = PolicyTable::uniform(3, 1);
        let demos = sample_trajectories(&chain3(), &pi, 0, 5, 1).unwrap();
        assert!(demos.is_empty());
        assert!(sample_trajectories(&chain3(), &pi, 1, 0, 1).is_err());
    }

    #[test]
    fn episodes_end_at_terminal() {
        let pi = PolicyTable::uniform(3, 1);
        let initial = [1.0, 0.0, 0.0];
        let demos = sample_trajectories_from(&chain3(), &pi, &initial, 3, 10, 7).unwrap();
        for ep in &demos.episodes {
            assert_eq!(ep.len(), 3);
            assert_eq!(
                ep.last().unwrap(),
                &Step {
                    state: 2,
                    action: 0,
                    next_state: 2,
                    done: true
                }
            );
        }
        demos.validate_against(&chain3()).unwrap();
    }
}
