use super::{PolicyTable, QTable, RewardTable, TabularMdp};
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 100_000;

/// Optimal Q-values by repeated Bellman optimality backups.
///
/// Stops once consecutive iterates differ by at most `tol` in sup-norm; the
/// returned table then has a Bellman residual of at most `γ · tol`.
#[derive(Clone, Copy, Debug)]
pub struct ValueIteration {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for ValueIteration {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

impl ValueIteration {
    pub fn solve(&self, mdp: &TabularMdp, reward: &RewardTable) -> Result<QTable> {
        self.solve_counted(mdp, reward).map(|(q, _)| q)
    }

    /// Like [`solve`](Self::solve), also returning the number of backups.
    pub fn solve_counted(&self, mdp: &TabularMdp, reward: &RewardTable) -> Result<(QTable, usize)> {
        mdp.check_table(reward, "reward")?;
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput(format!("tolerance {} must be positive", self.tol)));
        }
        if !reward.is_finite() {
            return Err(Error::InvalidInput("reward has non-finite entries".into()));
        }
        let (n_states, n_actions) = (mdp.n_states(), mdp.n_actions());
        let mut q = QTable::zeros(n_states, n_actions);
        let mut value = vec![0.0; n_states];
        let mut delta = f64::INFINITY;
        for iter in 1..=self.max_iters {
            delta = 0.0;
            for s in 0..n_states {
                for a in 0..n_actions {
                    let backup = reward.get(s, a) + mdp.discounted_next(s, a, &value);
                    delta = f64::max(delta, (backup - q.get(s, a)).abs());
                    q.set(s, a, backup);
                }
            }
            if !delta.is_finite() {
                break;
            }
            if delta <= self.tol {
                return Ok((q, iter));
            }
            for (s, v) in value.iter_mut().enumerate() {
                *v = q.row_max(s);
            }
        }
        Err(Error::NonConvergence {
            solver: "value iteration",
            iterations: self.max_iters,
            residual: delta,
        })
    }
}

pub fn value_iteration(mdp: &TabularMdp, reward: &RewardTable, tol: f64, max_iters: usize) -> Result<QTable> {
    ValueIteration { tol, max_iters }.solve(mdp, reward)
}

/// Softmax over each Q row at unit temperature, computed with the row maximum
/// subtracted.
pub fn boltzmann_policy(q: &QTable) -> PolicyTable {
    let n_actions = q.n_actions();
    let mut probs = Vec::with_capacity(q.n_states() * n_actions);
    for s in 0..q.n_states() {
        let row = q.row(s);
        let max = q.row_max(s);
        let start = probs.len();
        probs.extend(row.iter().map(|v| (v - max).exp()));
        let total: f64 = probs[start..].iter().sum();
        for p in &mut probs[start..] {
            *p /= total;
        }
    }
    PolicyTable::from_rows_unchecked(q.n_states(), n_actions, probs)
}

/// State values of `policy` under `reward`, iterated to a sup-norm change of
/// at most `tol`.
pub fn policy_evaluation(mdp: &TabularMdp, reward: &RewardTable, policy: &PolicyTable, tol: f64) -> Result<Vec<f64>> {
    policy_evaluation_capped(mdp, reward, policy, tol, DEFAULT_MAX_ITERS)
}

pub(crate) fn policy_evaluation_capped(
    mdp: &TabularMdp,
    reward: &RewardTable,
    policy: &PolicyTable,
    tol: f64,
    max_iters: usize,
) -> Result<Vec<f64>> {
    mdp.check_table(reward, "reward")?;
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(Error::InvalidDimension("policy does not match model".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance {tol} must be positive")));
    }
    let n_states = mdp.n_states();
    let mut value = vec![0.0; n_states];
    let mut next = vec![0.0; n_states];
    let mut delta = f64::INFINITY;
    for _ in 0..max_iters {
        delta = 0.0;
        for (s, slot) in next.iter_mut().enumerate() {
            let v: f64 = policy
                .row(s)
                .iter()
                .enumerate()
                .filter(|(_, p)| **p > 0.0)
                .map(|(a, p)| p * (reward.get(s, a) + mdp.discounted_next(s, a, &value)))
                .sum();
            delta = f64::max(delta, (v - value[s]).abs());
            *slot = v;
        }
        std::mem::swap(&mut value, &mut next);
        if !delta.is_finite() {
            break;
        }
        if delta <= tol {
            return Ok(value);
        }
    }
    Err(Error::NonConvergence {
        solver: "policy evaluation",
        iterations: max_iters,
        residual: delta,
    })
}

/// Mean over states of `V^{π_true} − V^{π}` under `true_reward`, where
/// `π_true` is the Boltzmann policy over the optimal Q of `true_reward`.
pub fn evd_for_policy(mdp: &TabularMdp, true_reward: &RewardTable, policy: &PolicyTable) -> Result<f64> {
    let expert = boltzmann_policy(&ValueIteration::default().solve(mdp, true_reward)?);
    let v_expert = policy_evaluation(mdp, true_reward, &expert, DEFAULT_TOL)?;
    let v_policy = policy_evaluation(mdp, true_reward, policy, DEFAULT_TOL)?;
    let gap: f64 = v_expert.iter().zip(&v_policy).map(|(e, p)| e - p).sum();
    Ok(gap / mdp.n_states() as f64)
}

/// Expected value difference between the Boltzmann policies induced by the
/// true and the learned reward, both evaluated under the true reward and
/// averaged uniformly over states.
///
/// Lower is better. The value is not bounded below by zero: a learned reward
/// whose Boltzmann policy is greedier than the expert's can score negative.
pub fn expected_value_difference(
    mdp: &TabularMdp,
    true_reward: &RewardTable,
    learned_reward: &RewardTable,
) -> Result<f64> {
    mdp.check_table(learned_reward, "learned reward")?;
    let learned = boltzmann_policy(&ValueIteration::default().solve(mdp, learned_reward)?);
    evd_for_policy(mdp, true_reward, &learned)
}
