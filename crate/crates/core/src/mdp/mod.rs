//! Finite MDPs and the per-(state, action) tables that live on them.
//!
//! Transition rows are stored sparsely as `(next_state, probability)` pairs.
//! A state flagged terminal still has actions and rewards, but nothing is
//! bootstrapped from its successors: `Q(s, a) = r(s, a)` there.

mod sample;
mod solve;

pub use sample::{sample_trajectories, sample_trajectories_from, topological_state_order, StateOrder};
pub use solve::{
    boltzmann_policy, evd_for_policy, expected_value_difference, policy_evaluation, value_iteration, ValueIteration,
    DEFAULT_MAX_ITERS, DEFAULT_TOL,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the row sums of transition and policy tables.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMdp", into = "RawMdp")]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// Indexed by `s * n_actions + a`.
    transitions: Vec<Vec<(usize, f64)>>,
    terminal: Vec<bool>,
    gamma: f64,
}

#[derive(Serialize, Deserialize)]
struct RawMdp {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    terminal: Vec<bool>,
    /// `transitions[s][a]` is a list of `[next_state, probability]`.
    transitions: Vec<Vec<Vec<(usize, f64)>>>,
}

impl TryFrom<RawMdp> for TabularMdp {
    type Error = Error;

    fn try_from(raw: RawMdp) -> Result<Self> {
        if raw.transitions.len() != raw.n_states {
            return Err(Error::InvalidModel(format!(
                "expected {} transition blocks, found {}",
                raw.n_states,
                raw.transitions.len()
            )));
        }
        let mut rows = Vec::with_capacity(raw.n_states * raw.n_actions);
        for (s, block) in raw.transitions.into_iter().enumerate() {
            if block.len() != raw.n_actions {
                return Err(Error::InvalidModel(format!(
                    "state {s} has {} action rows, expected {}",
                    block.len(),
                    raw.n_actions
                )));
            }
            rows.extend(block);
        }
        TabularMdp::new(raw.n_states, raw.n_actions, rows, raw.terminal, raw.gamma)
    }
}

impl From<TabularMdp> for RawMdp {
    fn from(m: TabularMdp) -> Self {
        let n_actions = m.n_actions;
        let mut rows = m.transitions.into_iter();
        let transitions = (0..m.n_states)
            .map(|_| rows.by_ref().take(n_actions).collect())
            .collect();
        RawMdp {
            n_states: m.n_states,
            n_actions,
            gamma: m.gamma,
            terminal: m.terminal,
            transitions,
        }
    }
}

impl TabularMdp {
    /// Builds and validates a model. `rows[s * n_actions + a]` holds the
    /// successor distribution of `(s, a)`; entries for the same successor are
    /// merged. Rows of terminal states may be empty.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        rows: Vec<Vec<(usize, f64)>>,
        terminal: Vec<bool>,
        gamma: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidModel("empty state or action space".into()));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidModel(format!("discount {gamma} outside [0, 1]")));
        }
        if terminal.len() != n_states {
            return Err(Error::InvalidModel(format!(
                "terminal mask has length {}, expected {n_states}",
                terminal.len()
            )));
        }
        if rows.len() != n_states * n_actions {
            return Err(Error::InvalidModel(format!(
                "expected {} transition rows, found {}",
                n_states * n_actions,
                rows.len()
            )));
        }
        let mut transitions = Vec::with_capacity(rows.len());
        for (idx, row) in rows.into_iter().enumerate() {
            let (s, a) = (idx / n_actions, idx % n_actions);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (next, p) in row {
                if next >= n_states {
                    return Err(Error::InvalidModel(format!("row ({s}, {a}) references state {next}")));
                }
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::InvalidModel(format!("row ({s}, {a}) has probability {p}")));
                }
                if p == 0.0 {
                    continue;
                }
                match merged.iter_mut().find(|(n, _)| *n == next) {
                    Some(entry) => entry.1 += p,
                    None => merged.push((next, p)),
                }
            }
            merged.sort_by_key(|&(n, _)| n);
            let total: f64 = merged.iter().map(|&(_, p)| p).sum();
            let empty_terminal = terminal[s] && merged.is_empty();
            if !empty_terminal && (total - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidModel(format!("row ({s}, {a}) sums to {total}")));
            }
            transitions.push(merged);
        }
        Ok(Self {
            n_states,
            n_actions,
            transitions,
            terminal,
            gamma,
        })
    }

    /// Builds a model from a dense `[state][action][next_state]` tensor.
    pub fn from_dense(tensor: &[Vec<Vec<f64>>], terminal: Vec<bool>, gamma: f64) -> Result<Self> {
        let n_states = tensor.len();
        let n_actions = tensor.first().map_or(0, Vec::len);
        let mut rows = Vec::with_capacity(n_states * n_actions);
        for (s, block) in tensor.iter().enumerate() {
            if block.len() != n_actions {
                return Err(Error::InvalidModel(format!("ragged action rows at state {s}")));
            }
            for row in block {
                if row.len() != n_states {
                    return Err(Error::InvalidModel(format!("ragged successor row at state {s}")));
                }
                rows.push(row.iter().copied().enumerate().filter(|&(_, p)| p != 0.0).collect());
            }
        }
        Self::new(n_states, n_actions, rows, terminal, gamma)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        self.terminal[state]
    }

    pub fn terminal_mask(&self) -> &[bool] {
        &self.terminal
    }

    /// Successor distribution of `(state, action)`.
    pub fn successors(&self, state: usize, action: usize) -> &[(usize, f64)] {
        &self.transitions[state * self.n_actions + action]
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidModel(format!("discount {gamma} outside [0, 1]")));
        }
        self.gamma = gamma;
        Ok(self)
    }

    /// `γ · E[value(s')]` for `(state, action)`, zero for terminal states.
    pub fn discounted_next(&self, state: usize, action: usize, value: &[f64]) -> f64 {
        if self.terminal[state] {
            return 0.0;
        }
        let expected: f64 = self
            .successors(state, action)
            .iter()
            .map(|&(next, p)| p * value[next])
            .sum();
        self.gamma * expected
    }

    pub(crate) fn check_table(&self, table: &StateActionTable, what: &str) -> Result<()> {
        if table.n_states() != self.n_states || table.n_actions() != self.n_actions {
            return Err(Error::InvalidDimension(format!(
                "{what} is {}x{}, model is {}x{}",
                table.n_states(),
                table.n_actions(),
                self.n_states,
                self.n_actions
            )));
        }
        Ok(())
    }
}

/// A real value per `(state, action)` pair; used for rewards, Q-values,
/// shifted Q-values and constrained Q-values alike.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateActionTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

pub type QTable = StateActionTable;
pub type RewardTable = StateActionTable;

impl StateActionTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
        }
    }

    pub fn from_values(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::InvalidDimension(format!(
                "{} values for a {n_states}x{n_actions} table",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite entry at ({}, {})",
                i / n_actions,
                i % n_actions
            )));
        }
        Ok(Self {
            n_states,
            n_actions,
            values,
        })
    }

    pub fn from_fn(n_states: usize, n_actions: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let values = (0..n_states * n_actions)
            .map(|i| f(i / n_actions, i % n_actions))
            .collect();
        Self {
            n_states,
            n_actions,
            values,
        }
    }

    /// Repeats a per-state value across every action.
    pub fn broadcast_states(per_state: &[f64], n_actions: usize) -> Self {
        Self::from_fn(per_state.len(), n_actions, |s, _| per_state[s])
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.n_actions + action]
    }

    #[inline]
    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.n_actions + action] = value;
    }

    pub fn row(&self, state: usize) -> &[f64] {
        let n = self.n_actions;
        &self.values[state * n..(state + 1) * n]
    }

    pub fn row_mut(&mut self, state: usize) -> &mut [f64] {
        let n = self.n_actions;
        &mut self.values[state * n..(state + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row_max(&self, state: usize) -> f64 {
        self.row(state).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Per-state maxima over actions.
    pub fn state_max(&self) -> Vec<f64> {
        (0..self.n_states).map(|s| self.row_max(s)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Sup-norm distance to another table of the same shape.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Row-stochastic action distribution per state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy")]
pub struct PolicyTable {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

#[derive(Deserialize)]
struct RawPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TryFrom<RawPolicy> for PolicyTable {
    type Error = Error;

    fn try_from(raw: RawPolicy) -> Result<Self> {
        PolicyTable::new(raw.n_states, raw.n_actions, raw.probs)
    }
}

impl PolicyTable {
    /// Validates non-negativity and row sums.
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if n_actions == 0 || probs.len() != n_states * n_actions {
            return Err(Error::InvalidDimension(format!(
                "{} probabilities for a {n_states}x{n_actions} policy",
                probs.len()
            )));
        }
        for (s, row) in probs.chunks(n_actions).enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidInput(format!("invalid probability in row {s}")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidInput(format!("policy row {s} sums to {total}")));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// One-hot policy choosing `actions[s]` in every state.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::InvalidInput(format!("action {a} out of range in state {s}")));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Ok(Self {
            n_states: actions.len(),
            n_actions,
            probs,
        })
    }

    pub(crate) fn from_rows_unchecked(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), n_states * n_actions);
        Self {
            n_states,
            n_actions,
            probs,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[state * self.n_actions + action]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        let n = self.n_actions;
        &self.probs[state * n..(state + 1) * n]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `KL(self(·|s) || other(·|s))` for one state.
    pub fn kl_divergence_at(&self, other: &Self, state: usize) -> f64 {
        self.row(state)
            .iter()
            .zip(other.row(state))
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, q)| p * (p / q).ln())
            .sum()
    }

    pub fn max_kl_divergence(&self, other: &Self) -> f64 {
        (0..self.n_states)
            .map(|s| self.kl_divergence_at(other, s))
            .fold(0.0, f64::max)
    }

    pub fn mean_kl_divergence(&self, other: &Self) -> f64 {
        let total: f64 = (0..self.n_states).map(|s| self.kl_divergence_at(other, s)).sum();
        total / self.n_states as f64
    }

    /// Most probable action per state, lowest index on ties.
    pub fn greedy_actions(&self) -> Vec<usize> {
        (0..self.n_states).map(|s| argmax(self.row(s))).collect()
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// One observed step. `done` marks the last step of an episode taken in a
/// terminal state; for those `next_state == state` and nothing is
/// bootstrapped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    #[serde(default)]
    pub done: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    pub n_states: usize,
    pub n_actions: usize,
    pub seed: u64,
    pub horizon: usize,
    pub episodes: Vec<Vec<Step>>,
}

impl TrajectorySet {
    pub fn n_steps(&self) -> usize {
        self.episodes.iter().map(Vec::len).sum()
    }

    pub fn steps(&self) -> impl Iterator<Item = &Step> {
        self.episodes.iter().flatten()
    }

    pub fn is_empty(&self) -> bool {
        self.n_steps() == 0
    }

    /// Checks indices, episode lengths and model support of every step.
    pub fn validate_against(&self, mdp: &TabularMdp) -> Result<()> {
        if self.n_states != mdp.n_states() || self.n_actions != mdp.n_actions() {
            return Err(Error::InvalidDimension("trajectory set does not match model".into()));
        }
        for (e, episode) in self.episodes.iter().enumerate() {
            if episode.len() > self.horizon {
                return Err(Error::InvalidInput(format!(
                    "episode {e} has {} steps, horizon is {}",
                    episode.len(),
                    self.horizon
                )));
            }
            for step in episode {
                if step.state >= self.n_states || step.next_state >= self.n_states || step.action >= self.n_actions {
                    return Err(Error::InvalidInput(format!("step {step:?} out of range")));
                }
                if step.done {
                    continue;
                }
                let supported = mdp
                    .successors(step.state, step.action)
                    .iter()
                    .any(|&(n, _)| n == step.next_state);
                if !supported {
                    return Err(Error::InvalidInput(format!("step {step:?} has zero model probability")));
                }
            }
        }
        Ok(())
    }
}
