//! Inverse Action-value Iteration.
//!
//! Given a model and the expert's action distribution, recovers a reward
//! whose optimal Q-function induces exactly that Boltzmann distribution.
//! On acyclic models this is one pass over the states in reverse topological
//! order; otherwise synchronous sweeps are repeated until the reward settles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{topological_state_order, PolicyTable, QTable, RewardTable, StateOrder, TabularMdp, TrajectorySet};
use crate::reward_solver::{EtaVector, RewardSolver};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IaviConfig {
    /// Floor applied to probabilities inside the logarithm.
    pub epsilon_logprob: f64,
    /// Sweep mode stops once the sup-norm reward change drops below this.
    pub convergence_tol: f64,
    pub max_sweeps: usize,
}

impl Default for IaviConfig {
    fn default() -> Self {
        Self {
            epsilon_logprob: 1e-9,
            convergence_tol: 1e-4,
            max_sweeps: 10_000,
        }
    }
}

impl IaviConfig {
    fn validate(&self) -> Result<()> {
        if !(self.epsilon_logprob > 0.0 && self.epsilon_logprob < 1.0) {
            return Err(Error::InvalidInput(format!(
                "epsilon_logprob {} outside (0, 1)",
                self.epsilon_logprob
            )));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidInput("convergence_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IaviResult {
    pub reward: RewardTable,
    pub q: QTable,
    pub sweeps_used: usize,
    pub converged: bool,
    /// Sup-norm reward change of each sweep (a single entry in one-pass mode).
    pub reward_changes: Vec<f64>,
}

/// `log(max(π(a|s), ε)) − γ · Σ_{s'} M(s, a, s') · max_{a'} Q(s', a')`.
pub fn compute_eta(
    mdp: &TabularMdp,
    q: &QTable,
    policy: &PolicyTable,
    state: usize,
    action: usize,
    epsilon: f64,
) -> f64 {
    let next_value = if mdp.is_terminal(state) {
        0.0
    } else {
        let expected: f64 = mdp
            .successors(state, action)
            .iter()
            .map(|&(next, p)| p * q.row_max(next))
            .sum();
        mdp.gamma() * expected
    };
    policy.prob(state, action).max(epsilon).ln() - next_value
}

/// Count-based action frequencies with a flag per state telling whether it
/// was ever visited. Unvisited states get the uniform row.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalPolicy {
    pub policy: PolicyTable,
    pub visited: Vec<bool>,
}

pub fn empirical_policy(demos: &TrajectorySet, n_states: usize, n_actions: usize) -> Result<EmpiricalPolicy> {
    let mut counts = vec![0u64; n_states * n_actions];
    for step in demos.steps() {
        if step.state >= n_states || step.action >= n_actions {
            return Err(Error::InvalidInput(format!("step {step:?} out of range")));
        }
        counts[step.state * n_actions + step.action] += 1;
    }
    let mut probs = vec![0.0; n_states * n_actions];
    let mut visited = vec![false; n_states];
    for s in 0..n_states {
        let row = &counts[s * n_actions..(s + 1) * n_actions];
        let total: u64 = row.iter().sum();
        let out = &mut probs[s * n_actions..(s + 1) * n_actions];
        if total == 0 {
            out.fill(1.0 / n_actions as f64);
        } else {
            visited[s] = true;
            for (p, &c) in out.iter_mut().zip(row) {
                *p = c as f64 / total as f64;
            }
        }
    }
    Ok(EmpiricalPolicy {
        policy: PolicyTable::new(n_states, n_actions, probs)?,
        visited,
    })
}

fn solve_state(
    mdp: &TabularMdp,
    q_next: &QTable,
    expert: &PolicyTable,
    state: usize,
    epsilon: f64,
    solver: &RewardSolver,
) -> Result<Vec<f64>> {
    let etas = (0..mdp.n_actions())
        .map(|a| compute_eta(mdp, q_next, expert, state, a, epsilon))
        .collect();
    solver.solve(&EtaVector::new(etas)?)
}

/// `Q(s, a) = r(s, a) + γ · E[max Q(s', ·)]` for every action of `state`.
fn backup_state(mdp: &TabularMdp, q_next: &QTable, rewards: &[f64], state: usize) -> Vec<f64> {
    rewards
        .iter()
        .enumerate()
        .map(|(a, &r)| {
            let next = if mdp.is_terminal(state) {
                0.0
            } else {
                mdp.gamma()
                    * mdp
                        .successors(state, a)
                        .iter()
                        .map(|&(n, p)| p * q_next.row_max(n))
                        .sum::<f64>()
            };
            r + next
        })
        .collect()
}

pub fn iavi_solve(mdp: &TabularMdp, expert: &PolicyTable, cfg: &IaviConfig) -> Result<IaviResult> {
    cfg.validate()?;
    if expert.n_states() != mdp.n_states() || expert.n_actions() != mdp.n_actions() {
        return Err(Error::InvalidDimension("expert policy does not match model".into()));
    }
    let (n_states, n_actions) = (mdp.n_states(), mdp.n_actions());
    let solver = RewardSolver::new(n_actions)?;
    let mut reward = RewardTable::zeros(n_states, n_actions);
    let mut q = QTable::zeros(n_states, n_actions);

    if let StateOrder::Acyclic(order) = topological_state_order(mdp) {
        // Successors are final before their predecessors are visited.
        let mut change = 0.0f64;
        for s in order {
            let rewards = solve_state(mdp, &q, expert, s, cfg.epsilon_logprob, &solver)?;
            let backed = backup_state(mdp, &q, &rewards, s);
            q.row_mut(s).copy_from_slice(&backed);
            for (a, r) in rewards.into_iter().enumerate() {
                change = change.max(r.abs());
                reward.set(s, a, r);
            }
        }
        return Ok(IaviResult {
            reward,
            q,
            sweeps_used: 1,
            converged: true,
            reward_changes: vec![change],
        });
    }

    let mut reward_changes = Vec::new();
    let mut next_q = q.clone();
    for sweep in 1..=cfg.max_sweeps {
        let mut change = 0.0f64;
        for s in 0..n_states {
            let rewards = solve_state(mdp, &q, expert, s, cfg.epsilon_logprob, &solver)?;
            let backed = backup_state(mdp, &q, &rewards, s);
            next_q.row_mut(s).copy_from_slice(&backed);
            for (a, r) in rewards.into_iter().enumerate() {
                change = change.max((r - reward.get(s, a)).abs());
                reward.set(s, a, r);
            }
        }
        std::mem::swap(&mut q, &mut next_q);
        reward_changes.push(change);
        if change < cfg.convergence_tol {
            return Ok(IaviResult {
                reward,
                q,
                sweeps_used: sweep,
                converged: true,
                reward_changes,
            });
        }
    }
    Ok(IaviResult {
        reward,
        q,
        sweeps_used: cfg.max_sweeps,
        converged: false,
        reward_changes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{boltzmann_policy, Step};

    #[test]
    fn eta_examples() {
        let term = TabularMdp::new(1, 2, vec![vec![], vec![]], vec![true], 0.9).unwrap();
        let pi = PolicyTable::uniform(1, 2);
        let q = QTable::zeros(1, 2);
        assert!((compute_eta(&term, &q, &pi, 0, 0, 1e-9) - 0.5f64.ln()).abs() < 1e-15);

        // s0 -> s1 deterministically, max Q(s1) = 2
        let mdp = TabularMdp::new(
            2,
            2,
            vec![vec![(1, 1.0)], vec![(1, 1.0)], vec![], vec![]],
            vec![false, true],
            0.9,
        )
        .unwrap();
        let q = QTable::from_values(2, 2, vec![0.0, 0.0, 2.0, -1.0]).unwrap();
        let pi = PolicyTable::new(2, 2, vec![1.0, 0.0, 0.5, 0.5]).unwrap();
        assert!((compute_eta(&mdp, &q, &pi, 0, 0, 1e-9) + 1.8).abs() < 1e-12);
        // zero probability is floored inside the log
        assert!((compute_eta(&mdp, &q, &pi, 0, 1, 1e-9) - (1e-9f64.ln() - 1.8)).abs() < 1e-12);

        let mdp0 = mdp.clone().with_gamma(0.0).unwrap();
        assert!((compute_eta(&mdp0, &q, &pi, 1, 1, 1e-9) - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn empirical_policy_counts_and_flags() {
        let step = |s, a| Step {
            state: s,
            action: a,
            next_state: s,
            done: false,
        };
        let demos = TrajectorySet {
            n_states: 2,
            n_actions: 2,
            seed: 0,
            horizon: 4,
            episodes: vec![vec![step(0, 0), step(0, 0), step(0, 1), step(0, 0)]],
        };
        let emp = empirical_policy(&demos, 2, 2).unwrap();
        assert_eq!(emp.policy.row(0), &[0.75, 0.25]);
        assert_eq!(emp.policy.row(1), &[0.5, 0.5]);
        assert_eq!(emp.visited, vec![true, false]);
    }

    #[test]
    fn uniform_expert_on_terminal_state() {
        let mdp = TabularMdp::new(1, 2, vec![vec![], vec![]], vec![true], 0.9).unwrap();
        let res = iavi_solve(&mdp, &PolicyTable::uniform(1, 2), &IaviConfig::default()).unwrap();
        assert!(res.converged);
        assert!(res.reward.values().iter().all(|r| r.abs() < 1e-12));
        let pi = boltzmann_policy(&res.q);
        assert!((pi.prob(0, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sweep_budget_exhaustion_is_reported() {
        let mdp = TabularMdp::new(
            2,
            2,
            vec![vec![(1, 1.0)], vec![(0, 1.0)], vec![(0, 1.0)], vec![(1, 1.0)]],
            vec![false; 2],
            0.9,
        )
        .unwrap();
        let expert = PolicyTable::new(2, 2, vec![0.8, 0.2, 0.3, 0.7]).unwrap();
        let cfg = IaviConfig {
            max_sweeps: 2,
            convergence_tol: 1e-12,
            ..IaviConfig::default()
        };
        let res = iavi_solve(&mdp, &expert, &cfg).unwrap();
        assert!(!res.converged);
        assert_eq!(res.sweeps_used, 2);
        assert_eq!(res.reward_changes.len(), 2);
    }
}
