//! Tabular Maximum Entropy IRL with a state-only linear reward.
//!
//! The inner loop is soft value iteration, either run to convergence or
//! reduced to a single backup warm-started from the previous outer
//! iteration's values.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{PolicyTable, QTable, RewardTable, TabularMdp, TrajectorySet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerMode {
    /// Soft value iteration from zeros until the values settle.
    Full,
    /// One soft backup from the previous outer iteration's values.
    Single,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaxEntConfig {
    pub learning_rate: f64,
    pub max_iterations: usize,
    /// Stop once the sup-norm change of the state reward drops below this.
    pub convergence_tol: f64,
    pub inner: InnerMode,
    pub inner_tol: f64,
    pub inner_max_iters: usize,
}

impl Default for MaxEntConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            max_iterations: 5_000,
            convergence_tol: 1e-4,
            inner: InnerMode::Full,
            inner_tol: 1e-8,
            inner_max_iters: 100_000,
        }
    }
}

impl MaxEntConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidInput("learning_rate must be positive".into()));
        }
        if !(self.convergence_tol > 0.0 && self.inner_tol > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SoftViResult {
    pub q: QTable,
    /// `V(s) = log Σ_a exp Q(s, a)`.
    pub value: Vec<f64>,
    pub policy: PolicyTable,
    pub backups: usize,
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|q| (q - m).exp()).sum::<f64>().ln()
}

/// `Q(s, a) = r(s, a) + γ · E[V(s')]`, with `Q = r` on terminal states.
pub fn soft_backup(mdp: &TabularMdp, reward: &RewardTable, value: &[f64]) -> QTable {
    QTable::from_fn(mdp.n_states(), mdp.n_actions(), |s, a| {
        reward.get(s, a) + mdp.discounted_next(s, a, value)
    })
}

fn softmax_policy(q: &QTable) -> (Vec<f64>, PolicyTable) {
    let n_actions = q.n_actions();
    let mut value = Vec::with_capacity(q.n_states());
    let mut probs = Vec::with_capacity(q.values().len());
    for s in 0..q.n_states() {
        let v = log_sum_exp(q.row(s));
        value.push(v);
        probs.extend(q.row(s).iter().map(|x| (x - v).exp()));
    }
    (value, PolicyTable::from_rows_unchecked(q.n_states(), n_actions, probs))
}

/// Soft value iteration. `Single` performs exactly one backup from `warm`
/// (zeros if absent); `Full` iterates from `warm` until the sup-norm value
/// change is at most `tol`.
pub fn soft_value_iteration(
    mdp: &TabularMdp,
    reward: &RewardTable,
    mode: InnerMode,
    warm: Option<&[f64]>,
    tol: f64,
    max_iters: usize,
) -> Result<SoftViResult> {
    mdp.check_table(reward, "reward")?;
    if !reward.is_finite() {
        return Err(Error::InvalidInput("reward has non-finite entries".into()));
    }
    let mut value = match warm {
        Some(v) if v.len() == mdp.n_states() => v.to_vec(),
        Some(_) => return Err(Error::InvalidDimension("warm-start values do not match model".into())),
        None => vec![0.0; mdp.n_states()],
    };
    let mut backups = 0;
    loop {
        let q = soft_backup(mdp, reward, &value);
        let (next, policy) = softmax_policy(&q);
        backups += 1;
        let delta = next.iter().zip(&value).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if mode == InnerMode::Single || delta <= tol {
            return Ok(SoftViResult {
                q,
                value: next,
                policy,
                backups,
            });
        }
        if backups >= max_iters || !delta.is_finite() {
            return Err(Error::NonConvergence {
                solver: "soft value iteration",
                iterations: backups,
                residual: delta,
            });
        }
        value = next;
    }
}

/// Expected number of visits to each state over `horizon` steps, starting
/// from `initial`. Mass reaching a terminal state is counted there once and
/// then leaves, so the total is `horizon` only when no terminal is reachable.
pub fn expected_state_visitation(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    horizon: usize,
    initial: &[f64],
) -> Result<Vec<f64>> {
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    if initial.len() != mdp.n_states() || policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(Error::InvalidDimension(
            "policy or initial distribution does not match model".into(),
        ));
    }
    let mut current = initial.to_vec();
    let mut total = current.clone();
    let mut next = vec![0.0; mdp.n_states()];
    for _ in 1..horizon {
        next.fill(0.0);
        for (s, &mass) in current.iter().enumerate() {
            if mass == 0.0 || mdp.is_terminal(s) {
                continue;
            }
            for (a, &p) in policy.row(s).iter().enumerate() {
                for &(n, t) in mdp.successors(s, a) {
                    next[n] += mass * p * t;
                }
            }
        }
        std::mem::swap(&mut current, &mut next);
        for (acc, m) in total.iter_mut().zip(&current) {
            *acc += m;
        }
    }
    Ok(total)
}

fn check_features(features: &[Vec<f64>], n_states: usize) -> Result<usize> {
    if features.len() != n_states {
        return Err(Error::InvalidDimension(format!(
            "{} feature rows for {n_states} states",
            features.len()
        )));
    }
    let dim = features.first().map_or(0, Vec::len);
    if dim == 0
        || features
            .iter()
            .any(|f| f.len() != dim || f.iter().any(|x| !x.is_finite()))
    {
        return Err(Error::InvalidInput(
            "feature rows must be finite, non-empty and equal length".into(),
        ));
    }
    Ok(dim)
}

fn feature_expectation(features: &[Vec<f64>], visitation: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; features[0].len()];
    for (f, &d) in features.iter().zip(visitation) {
        for (o, x) in out.iter_mut().zip(f) {
            *o += d * x;
        }
    }
    out
}

fn state_rewards(features: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    features
        .iter()
        .map(|f| f.iter().zip(weights).map(|(x, w)| x * w).sum())
        .collect()
}

/// Demonstration statistics the gradient is matched against.
#[derive(Clone, Debug, PartialEq)]
pub struct DemoExpectations {
    /// Per-episode feature counts.
    pub features: Vec<f64>,
    pub initial: Vec<f64>,
    pub horizon: usize,
}

impl DemoExpectations {
    /// Empirical statistics of sampled demonstrations.
    pub fn from_demos(demos: &TrajectorySet, features: &[Vec<f64>]) -> Result<Self> {
        let dim = check_features(features, demos.n_states)?;
        let episodes: Vec<_> = demos.episodes.iter().filter(|e| !e.is_empty()).collect();
        if episodes.is_empty() {
            return Err(Error::InvalidInput("no demonstration steps".into()));
        }
        let m = episodes.len() as f64;
        let mut expectation = vec![0.0; dim];
        let mut initial = vec![0.0; demos.n_states];
        for episode in &episodes {
            initial[episode[0].state] += 1.0 / m;
            for step in episode.iter() {
                if step.state >= demos.n_states {
                    return Err(Error::InvalidInput(format!("step {step:?} out of range")));
                }
                for (e, x) in expectation.iter_mut().zip(&features[step.state]) {
                    *e += x / m;
                }
            }
        }
        let horizon = episodes.iter().map(|e| e.len()).max().unwrap_or(1).max(demos.horizon);
        Ok(Self {
            features: expectation,
            initial,
            horizon,
        })
    }

    /// Exact statistics of `expert` started from `initial`.
    pub fn exact(
        mdp: &TabularMdp,
        expert: &PolicyTable,
        features: &[Vec<f64>],
        initial: Vec<f64>,
        horizon: usize,
    ) -> Result<Self> {
        check_features(features, mdp.n_states())?;
        let visitation = expected_state_visitation(mdp, expert, horizon, &initial)?;
        Ok(Self {
            features: feature_expectation(features, &visitation),
            initial,
            horizon,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxEntLogEntry {
    pub iteration: usize,
    pub grad_norm: f64,
    pub wall_clock: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaxEntResult {
    pub weights: Vec<f64>,
    pub reward: RewardTable,
    pub iterations: usize,
    pub converged: bool,
    pub log: Vec<MaxEntLogEntry>,
}

impl MaxEntResult {
    pub const CSV_HEADER: &'static str = "iteration,grad_norm,wall_clock";

    pub fn write_log_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for e in &self.log {
            writeln!(out, "{},{},{}", e.iteration, e.grad_norm, e.wall_clock)?;
        }
        Ok(())
    }
}

/// Gradient of the demonstration log-likelihood with respect to the weights,
/// normalised by the horizon, together with the soft-optimal inner solution.
pub fn maxent_gradient(
    mdp: &TabularMdp,
    features: &[Vec<f64>],
    demo: &DemoExpectations,
    weights: &[f64],
    cfg: &MaxEntConfig,
    warm: Option<&[f64]>,
) -> Result<(Vec<f64>, SoftViResult)> {
    let reward = RewardTable::broadcast_states(&state_rewards(features, weights), mdp.n_actions());
    let inner = soft_value_iteration(mdp, &reward, cfg.inner, warm, cfg.inner_tol, cfg.inner_max_iters)?;
    let visitation = expected_state_visitation(mdp, &inner.policy, demo.horizon, &demo.initial)?;
    let policy_features = feature_expectation(features, &visitation);
    let scale = 1.0 / demo.horizon as f64;
    let grad = demo
        .features
        .iter()
        .zip(&policy_features)
        .map(|(d, p)| (d - p) * scale)
        .collect();
    Ok((grad, inner))
}

/// Gradient ascent from zero weights against the given expectations.
pub fn maxent_irl_with_expectations(
    mdp: &TabularMdp,
    features: &[Vec<f64>],
    demo: &DemoExpectations,
    cfg: &MaxEntConfig,
) -> Result<MaxEntResult> {
    cfg.validate()?;
    let dim = check_features(features, mdp.n_states())?;
    if demo.features.len() != dim || demo.initial.len() != mdp.n_states() {
        return Err(Error::InvalidDimension(
            "demonstration statistics do not match features".into(),
        ));
    }
    let start = Instant::now();
    let mut weights = vec![0.0; dim];
    let mut rewards = state_rewards(features, &weights);
    let mut warm: Option<Vec<f64>> = None;
    let mut log = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let (grad, inner) = maxent_gradient(mdp, features, demo, &weights, cfg, warm.as_deref())?;
        if cfg.inner == InnerMode::Single {
            warm = Some(inner.value);
        }
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w += cfg.learning_rate * g;
        }
        let next = state_rewards(features, &weights);
        let change = next
            .iter()
            .zip(&rewards)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        rewards = next;
        log.push(MaxEntLogEntry {
            iteration: iterations,
            grad_norm: grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
            wall_clock: start.elapsed().as_secs_f64(),
        });
        if change < cfg.convergence_tol {
            converged = true;
            break;
        }
    }
    Ok(MaxEntResult {
        reward: RewardTable::broadcast_states(&rewards, mdp.n_actions()),
        weights,
        iterations,
        converged,
        log,
    })
}

/// MaxEnt IRL on sampled demonstrations.
pub fn maxent_irl(
    mdp: &TabularMdp,
    features: &[Vec<f64>],
    demos: &TrajectorySet,
    cfg: &MaxEntConfig,
) -> Result<MaxEntResult> {
    if demos.n_states != mdp.n_states() || demos.n_actions != mdp.n_actions() {
        return Err(Error::InvalidDimension("demonstrations do not match model".into()));
    }
    let demo = DemoExpectations::from_demos(demos, features)?;
    maxent_irl_with_expectations(mdp, features, &demo, cfg)
}
