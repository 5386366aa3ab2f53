//! Fixed-batch Deep Inverse Q-learning, optionally constrained.
//!
//! Reward, Q, shifted Q and (optionally) constrained Q are approximated by
//! networks mapping state features to one output per action, each paired
//! with a Polyak-averaged target copy. A classifier with linear outputs
//! estimates the expert's action distribution unless the true distribution
//! is supplied.
//!
//! Every regression target is computed from target networks only; the one
//! online quantity feeding the reward targets is the classifier's action
//! distribution, which has no target copy.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iql::ConstraintSet;
use crate::mdp::{PolicyTable, QTable, RewardTable, Step, TrajectorySet};
use crate::nn::{adam_step, cross_entropy, mse_loss, polyak_update, softmax, AdamState, Mlp};

/// Transitions over indexed states plus the feature vector of every state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    features: Vec<Vec<f64>>,
    n_actions: usize,
    capacity: usize,
    transitions: Vec<Step>,
    /// Slot the next insertion overwrites once the buffer is full.
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(features: Vec<Vec<f64>>, n_actions: usize, capacity: usize) -> Result<Self> {
        let dim = features.first().map_or(0, Vec::len);
        if dim == 0 || features.iter().any(|f| f.len() != dim) {
            return Err(Error::InvalidDimension(
                "feature rows must be non-empty and equal length".into(),
            ));
        }
        if capacity == 0 || n_actions < 2 {
            return Err(Error::InvalidInput(
                "capacity must be positive and n_actions ≥ 2".into(),
            ));
        }
        Ok(Self {
            features,
            n_actions,
            capacity,
            transitions: Vec::new(),
            cursor: 0,
        })
    }

    /// Buffer holding every step of `demos` (capacity = number of steps).
    pub fn from_trajectories(demos: &TrajectorySet, features: Vec<Vec<f64>>) -> Result<Self> {
        if features.len() != demos.n_states {
            return Err(Error::InvalidDimension("one feature row per state required".into()));
        }
        let mut buffer = Self::new(features, demos.n_actions, demos.n_steps().max(1))?;
        for step in demos.steps() {
            buffer.push(*step)?;
        }
        Ok(buffer)
    }

    /// Appends a transition, overwriting the oldest once at capacity.
    pub fn push(&mut self, step: Step) -> Result<()> {
        let n = self.features.len();
        if step.state >= n || step.next_state >= n || step.action >= self.n_actions {
            return Err(Error::InvalidInput(format!("transition {step:?} out of range")));
        }
        if self.transitions.len() < self.capacity {
            self.transitions.push(step);
        } else {
            self.transitions[self.cursor] = step;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_states(&self) -> usize {
        self.features.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn features(&self, state: usize) -> &[f64] {
        &self.features[state]
    }

    pub fn feature_matrix(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn transitions(&self) -> &[Step] {
        &self.transitions
    }

    /// Uniform minibatch indices, drawn with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Vec<usize> {
        (0..m).map(|_| rng.random_range(0..self.transitions.len())).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiqlConfig {
    pub minibatch: usize,
    pub lr_reward: f64,
    pub lr_q: f64,
    pub lr_shifted: f64,
    pub lr_classifier: f64,
    pub lr_constrained: f64,
    pub tau: f64,
    pub gamma: f64,
    /// Probabilities at or below this are clipped inside the log and their
    /// actions left out of the reward-target sum.
    pub eps_clip: f64,
    pub iterations: usize,
    pub hidden: Vec<usize>,
    pub use_true_distribution: bool,
}

impl Default for DiqlConfig {
    fn default() -> Self {
        Self {
            minibatch: 32,
            lr_reward: 1e-4,
            lr_q: 1e-4,
            lr_shifted: 1e-4,
            lr_classifier: 1e-4,
            lr_constrained: 1e-4,
            tau: 1e-4,
            gamma: 0.9,
            eps_clip: 1e-6,
            iterations: 10_000,
            hidden: vec![64, 64],
            use_true_distribution: false,
        }
    }
}

impl DiqlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.minibatch == 0 {
            return Err(Error::InvalidInput("minibatch must be at least 1".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) && self.tau != 0.0 {
            return Err(Error::InvalidInput(format!("tau {} outside (0, 1]", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidInput(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if !(self.eps_clip > 0.0 && self.eps_clip < 1.0) {
            return Err(Error::InvalidInput(format!(
                "eps_clip {} outside (0, 1)",
                self.eps_clip
            )));
        }
        Ok(())
    }

    fn layer_sizes(&self, n_inputs: usize, n_actions: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(n_inputs);
        sizes.extend(&self.hidden);
        sizes.push(n_actions);
        sizes
    }
}

/// Online network, its target copy and the optimizer state of the online
/// parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpBundle {
    pub online: Mlp,
    pub target: Mlp,
    pub adam: AdamState,
}

impl MlpBundle {
    pub fn new(sizes: &[usize], seed: u64) -> Result<Self> {
        let online = Mlp::new(sizes, seed)?;
        Ok(Self {
            target: online.clone(),
            adam: AdamState::for_net(&online),
            online,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiqlNets {
    pub reward: MlpBundle,
    pub q: MlpBundle,
    pub shifted: MlpBundle,
    pub classifier: MlpBundle,
    pub constrained: Option<MlpBundle>,
}

impl DiqlNets {
    pub fn new(n_features: usize, n_actions: usize, cfg: &DiqlConfig, constrained: bool, seed: u64) -> Result<Self> {
        let sizes = cfg.layer_sizes(n_features, n_actions);
        let mut seeds = ChaCha8Rng::seed_from_u64(seed);
        let mut next = || -> u64 { seeds.random() };
        let reward = MlpBundle::new(&sizes, next())?;
        let q = MlpBundle::new(&sizes, next())?;
        let shifted = MlpBundle::new(&sizes, next())?;
        let classifier = MlpBundle::new(&sizes, next())?;
        let constrained_seed = next();
        let constrained = if constrained {
            Some(MlpBundle::new(&sizes, constrained_seed)?)
        } else {
            None
        };
        Ok(Self {
            reward,
            q,
            shifted,
            classifier,
            constrained,
        })
    }

    pub fn n_actions(&self) -> usize {
        self.q.online.n_outputs()
    }

    /// Evaluates the online reward network on every state.
    pub fn reward_table(&self, features: &[Vec<f64>]) -> Result<RewardTable> {
        net_table(&self.reward.online, features)
    }

    pub fn q_table(&self, features: &[Vec<f64>]) -> Result<QTable> {
        net_table(&self.q.online, features)
    }

    pub fn constrained_q_table(&self, features: &[Vec<f64>]) -> Result<Option<QTable>> {
        self.constrained
            .as_ref()
            .map(|b| net_table(&b.online, features))
            .transpose()
    }
}

fn net_table(net: &Mlp, features: &[Vec<f64>]) -> Result<QTable> {
    let n_actions = net.n_outputs();
    let mut values = Vec::with_capacity(features.len() * n_actions);
    for x in features {
        values.extend(net.forward(x)?);
    }
    QTable::from_values(features.len(), n_actions, values)
}

/// Softmax of the classifier's linear outputs for one state.
pub fn classifier_probs(nets: &DiqlNets, features: &[f64]) -> Result<Vec<f64>> {
    Ok(softmax(&nets.classifier.online.forward(features)?))
}

/// Source of the action probabilities used for η̃.
#[derive(Clone, Copy, Debug)]
pub enum ActionDistribution<'a> {
    Classifier,
    True(&'a PolicyTable),
}

/// Regression targets for one minibatch.
#[derive(Clone, Debug, PartialEq)]
pub struct Targets {
    pub shifted: Vec<f64>,
    /// `None` where the sampled action's probability is at or below the
    /// clipping threshold; such samples do not train the reward network.
    pub reward: Vec<Option<f64>>,
    pub q: Vec<f64>,
    pub constrained: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationLosses {
    pub reward: f64,
    pub q: f64,
    pub shifted: f64,
    pub classifier: f64,
    pub constrained: f64,
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Computes all regression targets for `batch` from the target networks and
/// the given per-sample action probabilities.
pub fn regression_targets(
    nets: &DiqlNets,
    buffer: &ReplayBuffer,
    batch: &[usize],
    probs: &[Vec<f64>],
    cfg: &DiqlConfig,
    constraints: Option<&ConstraintSet>,
) -> Result<Targets> {
    let n = buffer.n_actions();
    let inv = 1.0 / (n - 1) as f64;
    let mut targets = Targets {
        shifted: Vec::with_capacity(batch.len()),
        reward: Vec::with_capacity(batch.len()),
        q: Vec::with_capacity(batch.len()),
        constrained: constraints.map(|_| Vec::with_capacity(batch.len())),
    };
    for (&idx, pi) in batch.iter().zip(probs) {
        let step = buffer.transitions()[idx];
        let x = buffer.features(step.state);
        let x_next = buffer.features(step.next_state);

        let next_q = if step.done {
            0.0
        } else {
            max_of(&nets.q.target.forward(x_next)?)
        };
        targets.shifted.push(cfg.gamma * next_q);

        let shifted = nets.shifted.target.forward(x)?;
        let reward = nets.reward.target.forward(x)?;
        let eta: Vec<f64> = pi
            .iter()
            .zip(&shifted)
            .map(|(p, sh)| p.max(cfg.eps_clip).ln() - sh)
            .collect();
        let a = step.action;
        if pi[a] > cfg.eps_clip {
            let others: f64 = (0..n)
                .filter(|&b| b != a && pi[b] > cfg.eps_clip)
                .map(|b| reward[b] - eta[b])
                .sum();
            targets.reward.push(Some(eta[a] + inv * others));
        } else {
            targets.reward.push(None);
        }

        targets.q.push(reward[a] + cfg.gamma * next_q);

        if let (Some(c), Some(out)) = (constraints, targets.constrained.as_mut()) {
            let bundle = nets
                .constrained
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("constraints given but no constrained network".into()))?;
            let next_c = if step.done {
                0.0
            } else {
                let values = bundle.target.forward(x_next)?;
                c.safe_set(step.next_state)?
                    .into_iter()
                    .map(|b| values[b])
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            out.push(reward[a] + cfg.gamma * next_c);
        }
    }
    Ok(targets)
}

/// One Adam step on the mean squared error between the selected outputs of
/// `bundle.online` and `targets`. Samples with no target are skipped.
fn regress(
    bundle: &mut MlpBundle,
    buffer: &ReplayBuffer,
    batch: &[usize],
    targets: &[Option<f64>],
    lr: f64,
) -> Result<f64> {
    let active: Vec<(usize, f64)> = batch
        .iter()
        .zip(targets)
        .filter_map(|(&i, t)| t.map(|t| (i, t)))
        .collect();
    if active.is_empty() {
        return Ok(0.0);
    }
    let m = active.len() as f64;
    let mut grads = vec![0.0; bundle.online.params().len()];
    let mut loss = 0.0;
    let mut out_grad = vec![0.0; bundle.online.n_outputs()];
    for (idx, target) in active {
        let step = buffer.transitions()[idx];
        let trace = bundle.online.forward_trace(buffer.features(step.state))?;
        let pred = trace.output()[step.action];
        let (l, g) = mse_loss(&[pred], &[target]);
        loss += l / m;
        out_grad.fill(0.0);
        out_grad[step.action] = g[0] / m;
        bundle.online.backward_into(&trace, &out_grad, &mut grads)?;
    }
    adam_step(bundle.online.params_mut(), &grads, &mut bundle.adam, lr)?;
    Ok(loss)
}

fn train_classifier(bundle: &mut MlpBundle, buffer: &ReplayBuffer, batch: &[usize], lr: f64) -> Result<f64> {
    let m = batch.len();
    let mut grads = vec![0.0; bundle.online.params().len()];
    let mut loss = 0.0;
    for &idx in batch {
        let step = buffer.transitions()[idx];
        let trace = bundle.online.forward_trace(buffer.features(step.state))?;
        let (l, g) = cross_entropy(trace.output(), step.action, m);
        loss += l;
        bundle.online.backward_into(&trace, &g, &mut grads)?;
    }
    adam_step(bundle.online.params_mut(), &grads, &mut bundle.adam, lr)?;
    Ok(loss)
}

fn iteration<R: Rng + ?Sized>(
    nets: &mut DiqlNets,
    buffer: &ReplayBuffer,
    cfg: &DiqlConfig,
    source: ActionDistribution<'_>,
    constraints: Option<&ConstraintSet>,
    rng: &mut R,
) -> Result<IterationLosses> {
    if buffer.is_empty() {
        return Err(Error::InvalidInput("replay buffer is empty".into()));
    }
    let batch = buffer.sample_indices(cfg.minibatch, rng);
    let mut losses = IterationLosses::default();

    // Target networks are not touched until the Polyak step below, so the
    // shifted-Q targets can be computed together with the others once the
    // classifier has been updated.
    if let ActionDistribution::Classifier = source {
        losses.classifier = train_classifier(&mut nets.classifier, buffer, &batch, cfg.lr_classifier)?;
    }
    let probs: Vec<Vec<f64>> = batch
        .iter()
        .map(|&i| {
            let s = buffer.transitions()[i].state;
            match source {
                ActionDistribution::Classifier => classifier_probs(nets, buffer.features(s)),
                ActionDistribution::True(policy) => Ok(policy.row(s).to_vec()),
            }
        })
        .collect::<Result<_>>()?;
    let targets = regression_targets(nets, buffer, &batch, &probs, cfg, constraints)?;

    let wrap = |v: &[f64]| v.iter().copied().map(Some).collect::<Vec<_>>();
    losses.shifted = regress(
        &mut nets.shifted,
        buffer,
        &batch,
        &wrap(&targets.shifted),
        cfg.lr_shifted,
    )?;
    losses.reward = regress(&mut nets.reward, buffer, &batch, &targets.reward, cfg.lr_reward)?;
    losses.q = regress(&mut nets.q, buffer, &batch, &wrap(&targets.q), cfg.lr_q)?;
    if let (Some(c_targets), Some(bundle)) = (&targets.constrained, nets.constrained.as_mut()) {
        losses.constrained = regress(bundle, buffer, &batch, &wrap(c_targets), cfg.lr_constrained)?;
    }

    for bundle in [&mut nets.reward, &mut nets.q, &mut nets.shifted] {
        polyak_update(&mut bundle.target, &bundle.online, cfg.tau)?;
    }
    if let Some(bundle) = nets.constrained.as_mut() {
        polyak_update(&mut bundle.target, &bundle.online, cfg.tau)?;
    }
    Ok(losses)
}

fn check_source(buffer: &ReplayBuffer, cfg: &DiqlConfig, source: ActionDistribution<'_>) -> Result<()> {
    match (cfg.use_true_distribution, source) {
        (true, ActionDistribution::Classifier) => Err(Error::InvalidInput(
            "use_true_distribution set but no distribution supplied".into(),
        )),
        (false, ActionDistribution::True(_)) => Err(Error::InvalidInput(
            "true distribution supplied but use_true_distribution unset".into(),
        )),
        (_, ActionDistribution::True(p))
            if p.n_states() != buffer.n_states() || p.n_actions() != buffer.n_actions() =>
        {
            Err(Error::InvalidDimension(
                "true distribution does not match buffer".into(),
            ))
        }
        _ => Ok(()),
    }
}

/// One unconstrained training iteration.
pub fn diql_iteration<R: Rng + ?Sized>(
    nets: &mut DiqlNets,
    buffer: &ReplayBuffer,
    cfg: &DiqlConfig,
    source: ActionDistribution<'_>,
    rng: &mut R,
) -> Result<IterationLosses> {
    check_source(buffer, cfg, source)?;
    iteration(nets, buffer, cfg, source, None, rng)
}

/// One constrained training iteration: [`diql_iteration`] plus the
/// constrained-Q regression, bootstrapping over safe next actions only.
pub fn dciql_iteration<R: Rng + ?Sized>(
    nets: &mut DiqlNets,
    buffer: &ReplayBuffer,
    constraints: &ConstraintSet,
    cfg: &DiqlConfig,
    source: ActionDistribution<'_>,
    rng: &mut R,
) -> Result<IterationLosses> {
    check_source(buffer, cfg, source)?;
    if nets.constrained.is_none() {
        return Err(Error::InvalidInput(
            "networks were built without a constrained Q".into(),
        ));
    }
    iteration(nets, buffer, cfg, source, Some(constraints), rng)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub losses: Vec<IterationLosses>,
}

impl TrainingLog {
    pub const CSV_HEADER: &'static str = "iteration,loss_r,loss_q,loss_sh,loss_rho,loss_c";

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for (i, l) in self.losses.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                i + 1,
                l.reward,
                l.q,
                l.shifted,
                l.classifier,
                l.constrained
            )?;
        }
        Ok(())
    }
}

/// Runs `cfg.iterations` iterations from a fresh initialisation.
pub fn train(
    buffer: &ReplayBuffer,
    cfg: &DiqlConfig,
    source: ActionDistribution<'_>,
    constraints: Option<&ConstraintSet>,
    seed: u64,
) -> Result<(DiqlNets, TrainingLog)> {
    cfg.validate()?;
    check_source(buffer, cfg, source)?;
    if buffer.is_empty() {
        return Err(Error::InvalidInput("replay buffer is empty".into()));
    }
    if let Some(c) = constraints {
        c.validate(buffer.n_states())?;
    }
    let mut nets = DiqlNets::new(
        buffer.feature_dim(),
        buffer.n_actions(),
        cfg,
        constraints.is_some(),
        seed,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut log = TrainingLog::default();
    for _ in 0..cfg.iterations {
        log.losses
            .push(iteration(&mut nets, buffer, cfg, source, constraints, &mut rng)?);
    }
    Ok((nets, log))
}

/// One-hot feature rows, one per state.
pub fn one_hot_features(n_states: usize) -> Vec<Vec<f64>> {
    (0..n_states)
        .map(|s| {
            let mut row = vec![0.0; n_states];
            row[s] = 1.0;
            row
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_buffer() -> ReplayBuffer {
        let mut b = ReplayBuffer::new(one_hot_features(2), 2, 8).unwrap();
        for (s, a, n) in [(0, 0, 1), (0, 1, 0), (1, 0, 1), (1, 1, 0)] {
            b.push(Step {
                state: s,
                action: a,
                next_state: n,
                done: false,
            })
            .unwrap();
        }
        b
    }

    #[test]
    fn untrained_zero_classifier_is_uniform() {
        let cfg = DiqlConfig {
            hidden: vec![4],
            ..DiqlConfig::default()
        };
        let mut nets = DiqlNets::new(3, 4, &cfg, false, 1).unwrap();
        nets.classifier.online.params_mut().fill(0.0);
        let p = classifier_probs(&nets, &[0.5, 1.0, -1.0]).unwrap();
        assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn dominant_logit() {
        let p = softmax(&[10.0, 0.0, 0.0]);
        assert!((p[0] - 1.0 / (1.0 + 2.0 * (-10f64).exp())).abs() < 1e-15);
        assert!(p[0] > 0.9999);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn buffer_evicts_oldest() {
        let mut b = ReplayBuffer::new(one_hot_features(3), 2, 2).unwrap();
        for s in 0..3 {
            b.push(Step {
                state: s,
                action: 0,
                next_state: 0,
                done: false,
            })
            .unwrap();
        }
        assert_eq!(b.len(), 2);
        let states: Vec<usize> = b.transitions().iter().map(|t| t.state).collect();
        assert_eq!(states, vec![2, 1]);
        assert!(b
            .push(Step {
                state: 3,
                action: 0,
                next_state: 0,
                done: false
            })
            .is_err());
    }

    #[test]
    fn empty_buffer_rejected() {
        let b = ReplayBuffer::new(one_hot_features(2), 2, 4).unwrap();
        let cfg = DiqlConfig {
            hidden: vec![4],
            iterations: 1,
            ..DiqlConfig::default()
        };
        assert!(train(&b, &cfg, ActionDistribution::Classifier, None, 0).is_err());
    }

    #[test]
    fn zero_iterations_equal_initialisation() {
        let b = tiny_buffer();
        let cfg = DiqlConfig {
            hidden: vec![4],
            iterations: 0,
            ..DiqlConfig::default()
        };
        let (nets, log) = train(&b, &cfg, ActionDistribution::Classifier, None, 5).unwrap();
        assert_eq!(nets, DiqlNets::new(2, 2, &cfg, false, 5).unwrap());
        assert!(log.losses.is_empty());
    }

    #[test]
    fn frozen_targets_with_zero_tau() {
        let b = tiny_buffer();
        let cfg = DiqlConfig {
            hidden: vec![4],
            iterations: 20,
            tau: 0.0,
            lr_q: 1e-2,
            ..DiqlConfig::default()
        };
        let init = DiqlNets::new(2, 2, &cfg, false, 3).unwrap();
        let (nets, _) = train(&b, &cfg, ActionDistribution::Classifier, None, 3).unwrap();
        assert_eq!(nets.q.target, init.q.target);
        assert_eq!(nets.reward.target, init.reward.target);
        assert_eq!(nets.shifted.target, init.shifted.target);
        assert_ne!(nets.q.online, init.q.online);
    }

    #[test]
    fn source_flag_must_match() {
        let b = tiny_buffer();
        let pi = PolicyTable::uniform(2, 2);
        let cfg = DiqlConfig {
            hidden: vec![4],
            iterations: 1,
            ..DiqlConfig::default()
        };
        assert!(train(&b, &cfg, ActionDistribution::True(&pi), None, 0).is_err());
        let cfg = DiqlConfig {
            use_true_distribution: true,
            ..cfg
        };
        assert!(train(&b, &cfg, ActionDistribution::Classifier, None, 0).is_err());
        assert!(train(&b, &cfg, ActionDistribution::True(&pi), None, 0).is_ok());
    }

    #[test]
    fn log_csv_header() {
        let log = TrainingLog {
            losses: vec![IterationLosses {
                reward: 1.0,
                ..Default::default()
            }],
        };
        let mut out = Vec::new();
        log.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "iteration,loss_r,loss_q,loss_sh,loss_rho,loss_c\n1,1,0,0,0,0\n");
    }
}
