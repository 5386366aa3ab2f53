//! Model-free tabular Inverse Q-learning and its constrained variant.
//!
//! Each observed transition updates, in this order: the visitation counter,
//! the count-based action probabilities of the source state, the shifted
//! Q-function, the reward and finally Q (and Q^C when constrained).

mod constraints;

pub use constraints::{constrained_greedy_actions, constrained_greedy_policy, safe_set, Constraint, ConstraintSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{PolicyTable, QTable, RewardTable, Step, TrajectorySet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IqlConfig {
    pub alpha_r: f64,
    pub alpha_sh: f64,
    pub alpha_q: f64,
    pub alpha_c: f64,
    pub gamma: f64,
    pub epsilon_logprob: f64,
    /// Passes over a fixed demonstration set in batch mode.
    pub epochs: usize,
}

impl Default for IqlConfig {
    fn default() -> Self {
        Self {
            alpha_r: 1e-3,
            alpha_sh: 1e-3,
            alpha_q: 1e-3,
            alpha_c: 1e-3,
            gamma: 0.9,
            epsilon_logprob: 1e-9,
            epochs: 1,
        }
    }
}

impl IqlConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, rate) in [
            ("alpha_r", self.alpha_r),
            ("alpha_sh", self.alpha_sh),
            ("alpha_q", self.alpha_q),
            ("alpha_c", self.alpha_c),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::InvalidInput(format!("{name} = {rate} outside [0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidInput(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if !(self.epsilon_logprob > 0.0) {
            return Err(Error::InvalidInput("epsilon_logprob must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IqlState {
    pub reward: RewardTable,
    pub q: QTable,
    pub q_shifted: QTable,
    /// Visit count per `(state, action)`, row-major.
    pub counter: Vec<u64>,
    pub q_constrained: Option<QTable>,
    /// When set, action probabilities come from this table instead of the
    /// counter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert_override: Option<PolicyTable>,
}

impl IqlState {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self {
            reward: RewardTable::zeros(n_states, n_actions),
            q: QTable::zeros(n_states, n_actions),
            q_shifted: QTable::zeros(n_states, n_actions),
            counter: vec![0; n_states * n_actions],
            q_constrained: None,
            expert_override: None,
        }
    }

    pub fn with_constrained(mut self) -> Self {
        self.q_constrained = Some(QTable::zeros(self.n_states(), self.n_actions()));
        self
    }

    pub fn with_expert_policy(mut self, policy: PolicyTable) -> Result<Self> {
        if policy.n_states() != self.n_states() || policy.n_actions() != self.n_actions() {
            return Err(Error::InvalidDimension("expert policy does not match tables".into()));
        }
        self.expert_override = Some(policy);
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.q.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.q.n_actions()
    }

    pub fn count(&self, state: usize, action: usize) -> u64 {
        self.counter[state * self.n_actions() + action]
    }

    /// Action probabilities of `state`: the override if present, else the
    /// counter frequencies (uniform while the state is unvisited).
    pub fn action_probabilities(&self, state: usize) -> Vec<f64> {
        if let Some(policy) = &self.expert_override {
            return policy.row(state).to_vec();
        }
        let n = self.n_actions();
        let row = &self.counter[state * n..(state + 1) * n];
        let total: u64 = row.iter().sum();
        if total == 0 {
            return vec![1.0 / n as f64; n];
        }
        row.iter().map(|&c| c as f64 / total as f64).collect()
    }

    /// Count-based policy over all states.
    pub fn empirical_policy(&self) -> PolicyTable {
        let probs = (0..self.n_states())
            .flat_map(|s| self.action_probabilities(s))
            .collect();
        PolicyTable::from_rows_unchecked(self.n_states(), self.n_actions(), probs)
    }

    fn check_step(&self, step: &Step) -> Result<()> {
        if step.state >= self.n_states() || step.next_state >= self.n_states() || step.action >= self.n_actions() {
            return Err(Error::InvalidInput(format!(
                "transition {step:?} out of range for {}x{} tables",
                self.n_states(),
                self.n_actions()
            )));
        }
        Ok(())
    }

    /// One Inverse Q-learning update from a single transition.
    pub fn iql_step(&mut self, cfg: &IqlConfig, step: &Step) -> Result<()> {
        self.check_step(step)?;
        let n = self.n_actions();
        let (s, a) = (step.state, step.action);
        if n < 2 {
            return Err(Error::InvalidDimension(
                "inverse Q-learning needs at least two actions".into(),
            ));
        }

        self.counter[s * n + a] += 1;
        let probs = self.action_probabilities(s);

        let next_max = if step.done {
            0.0
        } else {
            self.q.row_max(step.next_state)
        };
        let sh = (1.0 - cfg.alpha_sh) * self.q_shifted.get(s, a) + cfg.alpha_sh * cfg.gamma * next_max;
        self.q_shifted.set(s, a, sh);

        let eta: Vec<f64> = probs
            .iter()
            .zip(self.q_shifted.row(s))
            .map(|(p, sh)| p.max(cfg.epsilon_logprob).ln() - sh)
            .collect();

        let others: f64 = (0..n).filter(|&b| b != a).map(|b| self.reward.get(s, b) - eta[b]).sum();
        let target = eta[a] + others / (n - 1) as f64;
        let r = (1.0 - cfg.alpha_r) * self.reward.get(s, a) + cfg.alpha_r * target;
        self.reward.set(s, a, r);

        let q = (1.0 - cfg.alpha_q) * self.q.get(s, a) + cfg.alpha_q * (r + cfg.gamma * next_max);
        self.q.set(s, a, q);
        Ok(())
    }

    /// [`iql_step`](Self::iql_step) followed by the constrained Q update,
    /// which bootstraps only over the safe actions of the next state.
    pub fn ciql_step(&mut self, cfg: &IqlConfig, constraints: &ConstraintSet, step: &Step) -> Result<()> {
        self.check_step(step)?;
        if constraints.n_actions() != self.n_actions() {
            return Err(Error::InvalidDimension("constraint set does not match tables".into()));
        }
        if self.q_constrained.is_none() {
            return Err(Error::InvalidInput("state has no constrained Q table".into()));
        }
        let next_safe_max = if step.done {
            0.0
        } else {
            constraints.safe_max(self.q_constrained.as_ref().unwrap(), step.next_state)?
        };
        self.iql_step(cfg, step)?;
        let (s, a) = (step.state, step.action);
        let r = self.reward.get(s, a);
        let qc = self.q_constrained.as_mut().unwrap();
        let updated = (1.0 - cfg.alpha_c) * qc.get(s, a) + cfg.alpha_c * (r + cfg.gamma * next_safe_max);
        qc.set(s, a, updated);
        Ok(())
    }
}

/// Replays `demos` in stored order for `cfg.epochs` passes.
pub fn run_iql(demos: &TrajectorySet, cfg: &IqlConfig) -> Result<IqlState> {
    let mut state = IqlState::new(demos.n_states, demos.n_actions);
    run_iql_into(&mut state, demos, cfg)?;
    Ok(state)
}

pub fn run_iql_into(state: &mut IqlState, demos: &TrajectorySet, cfg: &IqlConfig) -> Result<()> {
    cfg.validate()?;
    if demos.is_empty() {
        return Err(Error::InvalidInput("no demonstrations".into()));
    }
    for _ in 0..cfg.epochs {
        for step in demos.steps() {
            state.iql_step(cfg, step)?;
        }
    }
    Ok(())
}

/// Applies [`IqlState::iql_step`] to every transition of a stream, once.
pub fn run_iql_stream<'a>(
    state: &mut IqlState,
    steps: impl IntoIterator<Item = &'a Step>,
    cfg: &IqlConfig,
) -> Result<usize> {
    cfg.validate()?;
    let mut seen = 0;
    for step in steps {
        state.iql_step(cfg, step)?;
        seen += 1;
    }
    Ok(seen)
}

pub fn run_ciql(demos: &TrajectorySet, cfg: &IqlConfig, constraints: &ConstraintSet) -> Result<IqlState> {
    cfg.validate()?;
    constraints.validate(demos.n_states)?;
    if demos.is_empty() {
        return Err(Error::InvalidInput("no demonstrations".into()));
    }
    let mut state = IqlState::new(demos.n_states, demos.n_actions).with_constrained();
    for _ in 0..cfg.epochs {
        for step in demos.steps() {
            state.ciql_step(cfg, constraints, step)?;
        }
    }
    Ok(state)
}

/// Everything needed to resume or audit a tabular run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IqlCheckpoint {
    pub config: IqlConfig,
    pub state: IqlState,
    /// Transitions consumed so far; replay is deterministic, so this
    /// position is the only progress state.
    pub steps_applied: u64,
}
