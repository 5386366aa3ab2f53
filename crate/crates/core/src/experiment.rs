//! Experiment runs on Objectworld instances: one algorithm, several seeds,
//! EVD and wall-clock per seed, and mean ± sd summaries.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deep_iql::{self, ActionDistribution, DiqlConfig, ReplayBuffer};
use crate::error::{Error, Result};
use crate::iavi::{empirical_policy, iavi_solve, IaviConfig};
use crate::iql::{constrained_greedy_policy, IqlConfig, IqlState};
use crate::maxent::{maxent_irl_with_expectations, DemoExpectations, InnerMode, MaxEntConfig};
use crate::mdp::{
    boltzmann_policy, evd_for_policy, expected_value_difference, sample_trajectories, value_iteration, PolicyTable,
    RewardTable, TrajectorySet, DEFAULT_MAX_ITERS, DEFAULT_TOL,
};
use crate::objectworld::{self, constrained_variant, ConstraintSpecOW, ObjectworldInstance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Iavi,
    Iql,
    Ciql,
    Diql,
    Dciql,
    Maxent,
    #[serde(rename = "maxent-1step")]
    Maxent1Step,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Iavi,
        Algorithm::Iql,
        Algorithm::Ciql,
        Algorithm::Diql,
        Algorithm::Dciql,
        Algorithm::Maxent,
        Algorithm::Maxent1Step,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Iavi => "iavi",
            Algorithm::Iql => "iql",
            Algorithm::Ciql => "ciql",
            Algorithm::Diql => "diql",
            Algorithm::Dciql => "dciql",
            Algorithm::Maxent => "maxent",
            Algorithm::Maxent1Step => "maxent-1step",
        }
    }

    pub fn is_constrained(self) -> bool {
        matches!(self, Algorithm::Ciql | Algorithm::Dciql)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemoConfig {
    pub episodes: usize,
    pub horizon: usize,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            episodes: 12_500,
            horizon: 8,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeepFeatures {
    /// One indicator per state.
    #[default]
    OneHot,
    /// The instance's color-distance features.
    Objectworld,
}

/// Per-algorithm settings; any subset may be given in a JSON override file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub iavi: IaviConfig,
    pub iql: IqlConfig,
    pub diql: DiqlConfig,
    pub maxent: MaxEntConfig,
    pub demos: DemoConfig,
    pub constraint: ConstraintSpecOW,
    pub deep_features: DeepFeatures,
}

/// Where the expert's behavior comes from.
#[derive(Clone, Debug)]
pub enum DataSource {
    /// The exact expert action distribution. Model-free algorithms still
    /// need transitions; they are sampled per seed from the expert.
    Exact,
    /// Fixed demonstrations.
    Demos(TrajectorySet),
    /// Fresh demonstrations of the given number of episodes per seed.
    Sampled { episodes: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub evd: f64,
    pub wall_clock_secs: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violations: Option<usize>,
    /// Mean over states of KL(expert ‖ learned policy).
    pub policy_kl: f64,
    #[serde(default)]
    pub artifacts: Vec<PathBuf>,
}

impl RunRecord {
    /// Equality ignoring wall-clock and artifact paths.
    pub fn same_metrics(&self, other: &Self) -> bool {
        self.algorithm == other.algorithm
            && self.seed == other.seed
            && self.evd.to_bits() == other.evd.to_bits()
            && self.iterations == other.iterations
            && self.converged == other.converged
            && self.violations == other.violations
            && self.policy_kl.to_bits() == other.policy_kl.to_bits()
    }
}

/// Result of one seed, with the learned quantities kept for callers that
/// want more than the metrics.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub reward: RewardTable,
    /// Policy the metrics were computed on.
    pub policy: PolicyTable,
    /// Per-iteration CSV log, when the algorithm produces one.
    pub log_csv: Option<String>,
}

fn expert_demos(
    instance: &ObjectworldInstance,
    expert: &PolicyTable,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<TrajectorySet> {
    sample_trajectories(&instance.mdp, expert, episodes, horizon, seed)
}

fn learned_policy(instance: &ObjectworldInstance, reward: &RewardTable) -> Result<PolicyTable> {
    Ok(boltzmann_policy(&value_iteration(
        &instance.mdp,
        reward,
        DEFAULT_TOL,
        DEFAULT_MAX_ITERS,
    )?))
}

fn deep_features(instance: &ObjectworldInstance, kind: DeepFeatures) -> Vec<Vec<f64>> {
    match kind {
        DeepFeatures::OneHot => deep_iql::one_hot_features(instance.n_states()),
        DeepFeatures::Objectworld => instance.features.clone(),
    }
}

/// Runs one algorithm for one seed. Wall-clock covers the learner only, not
/// data preparation or evaluation.
pub fn run_single(
    instance: &ObjectworldInstance,
    algorithm: Algorithm,
    cfg: &RunConfig,
    data: &DataSource,
    seed: u64,
) -> Result<RunOutcome> {
    let (expert, _) = objectworld::expert(instance)?;
    let n_states = instance.n_states();
    let n_actions = instance.mdp.n_actions();
    let demos = match data {
        DataSource::Exact => None,
        DataSource::Demos(d) => {
            d.validate_against(&instance.mdp)?;
            Some(d.clone())
        }
        DataSource::Sampled { episodes } => Some(expert_demos(instance, &expert, *episodes, cfg.demos.horizon, seed)?),
    };
    let transitions = || -> Result<TrajectorySet> {
        match &demos {
            Some(d) => Ok(d.clone()),
            None => expert_demos(instance, &expert, cfg.demos.episodes, cfg.demos.horizon, seed),
        }
    };
    let constraints = if algorithm.is_constrained() {
        Some(constrained_variant(instance, &cfg.constraint)?)
    } else {
        None
    };

    let mut log_csv = None;
    let mut violations = None;
    let (reward, policy, iterations, converged, wall) = match algorithm {
        Algorithm::Iavi => {
            let target = match &demos {
                Some(d) => empirical_policy(d, n_states, n_actions)?.policy,
                None => expert.clone(),
            };
            let mdp = instance.mdp.clone();
            let start = Instant::now();
            let res = iavi_solve(&mdp, &target, &cfg.iavi)?;
            let wall = start.elapsed().as_secs_f64();
            let policy = learned_policy(instance, &res.reward)?;
            (res.reward, policy, res.sweeps_used, res.converged, wall)
        }
        Algorithm::Iql | Algorithm::Ciql => {
            let data = transitions()?;
            let iql_cfg = IqlConfig {
                gamma: instance.mdp.gamma(),
                ..cfg.iql
            };
            let mut state = IqlState::new(n_states, n_actions);
            if demos.is_none() {
                state = state.with_expert_policy(expert.clone())?;
            }
            if constraints.is_some() {
                state = state.with_constrained();
            }
            iql_cfg.validate()?;
            let start = Instant::now();
            for _ in 0..iql_cfg.epochs {
                for step in data.steps() {
                    match &constraints {
                        Some(c) => state.ciql_step(&iql_cfg, c, step)?,
                        None => state.iql_step(&iql_cfg, step)?,
                    }
                }
            }
            let wall = start.elapsed().as_secs_f64();
            let policy = match (&constraints, &state.q_constrained) {
                (Some(c), Some(qc)) => {
                    let pi = constrained_greedy_policy(qc, c)?;
                    violations = Some(c.count_violations(&pi.greedy_actions()));
                    pi
                }
                _ => learned_policy(instance, &state.reward)?,
            };
            (state.reward, policy, data.n_steps() * iql_cfg.epochs, true, wall)
        }
        Algorithm::Diql | Algorithm::Dciql => {
            let data = transitions()?;
            let features = deep_features(instance, cfg.deep_features);
            let buffer = ReplayBuffer::from_trajectories(&data, features.clone())?;
            let diql_cfg = DiqlConfig {
                gamma: instance.mdp.gamma(),
                use_true_distribution: demos.is_none(),
                ..cfg.diql.clone()
            };
            let source = if demos.is_none() {
                ActionDistribution::True(&expert)
            } else {
                ActionDistribution::Classifier
            };
            let start = Instant::now();
            let (nets, log) = deep_iql::train(&buffer, &diql_cfg, source, constraints.as_ref(), seed)?;
            let wall = start.elapsed().as_secs_f64();
            let mut csv = Vec::new();
            log.write_csv(&mut csv)?;
            log_csv = Some(String::from_utf8_lossy(&csv).into_owned());
            let reward = nets.reward_table(&features)?;
            let policy = match (&constraints, nets.constrained_q_table(&features)?) {
                (Some(c), Some(qc)) => {
                    let pi = constrained_greedy_policy(&qc, c)?;
                    violations = Some(c.count_violations(&pi.greedy_actions()));
                    pi
                }
                _ => learned_policy(instance, &reward)?,
            };
            (reward, policy, diql_cfg.iterations, true, wall)
        }
        Algorithm::Maxent | Algorithm::Maxent1Step => {
            let horizon = cfg.demos.horizon;
            let stats = match &demos {
                Some(d) => DemoExpectations::from_demos(d, &instance.features)?,
                None => DemoExpectations::exact(
                    &instance.mdp,
                    &expert,
                    &instance.features,
                    vec![1.0 / n_states as f64; n_states],
                    horizon,
                )?,
            };
            let me_cfg = MaxEntConfig {
                inner: if algorithm == Algorithm::Maxent1Step {
                    InnerMode::Single
                } else {
                    InnerMode::Full
                },
                ..cfg.maxent
            };
            let start = Instant::now();
            let res = maxent_irl_with_expectations(&instance.mdp, &instance.features, &stats, &me_cfg)?;
            let wall = start.elapsed().as_secs_f64();
            let mut csv = Vec::new();
            res.write_log_csv(&mut csv)?;
            log_csv = Some(String::from_utf8_lossy(&csv).into_owned());
            let policy = learned_policy(instance, &res.reward)?;
            (res.reward, policy, res.iterations, res.converged, wall)
        }
    };

    let evd = if algorithm.is_constrained() {
        evd_for_policy(&instance.mdp, &instance.true_reward, &policy)?
    } else {
        expected_value_difference(&instance.mdp, &instance.true_reward, &reward)?
    };
    let policy_kl = expert.mean_kl_divergence(&policy);
    Ok(RunOutcome {
        record: RunRecord {
            algorithm,
            seed,
            evd,
            wall_clock_secs: wall,
            iterations,
            converged,
            violations,
            policy_kl,
            artifacts: Vec::new(),
        },
        reward,
        policy,
        log_csv,
    })
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub algorithm: Algorithm,
    pub n_seeds: usize,
    pub n_failed: usize,
    pub evd_mean: f64,
    pub evd_sd: f64,
    pub wall_clock_mean: f64,
    pub wall_clock_sd: f64,
    pub iterations_mean: f64,
    pub violations_mean: Option<f64>,
}

impl Summary {
    pub const CSV_HEADER: &'static str =
        "algorithm,n_seeds,n_failed,evd_mean,evd_sd,wall_clock_mean,wall_clock_sd,iterations_mean,violations_mean";

    pub fn from_records(algorithm: Algorithm, records: &[RunRecord], n_failed: usize) -> Self {
        let evd: Vec<f64> = records.iter().map(|r| r.evd).collect();
        let wall: Vec<f64> = records.iter().map(|r| r.wall_clock_secs).collect();
        let iters: Vec<f64> = records.iter().map(|r| r.iterations as f64).collect();
        let viol: Vec<f64> = records.iter().filter_map(|r| r.violations.map(|v| v as f64)).collect();
        let (evd_mean, evd_sd) = mean_sd(&evd);
        let (wall_clock_mean, wall_clock_sd) = mean_sd(&wall);
        Self {
            algorithm,
            n_seeds: records.len(),
            n_failed,
            evd_mean,
            evd_sd,
            wall_clock_mean,
            wall_clock_sd,
            iterations_mean: mean_sd(&iters).0,
            violations_mean: (!viol.is_empty()).then(|| mean_sd(&viol).0),
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        let viol = self.violations_mean.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            self.algorithm,
            self.n_seeds,
            self.n_failed,
            self.evd_mean,
            self.evd_sd,
            self.wall_clock_mean,
            self.wall_clock_sd,
            self.iterations_mean,
            viol
        )
    }

    /// Recomputes the statistics from `records` and compares.
    pub fn audit(&self, records: &[RunRecord]) -> bool {
        let fresh = Self::from_records(self.algorithm, records, self.n_failed);
        let close = |a: f64, b: f64| (a.is_nan() && b.is_nan()) || (a - b).abs() <= 1e-12 * (1.0 + a.abs());
        fresh.n_seeds == self.n_seeds
            && close(fresh.evd_mean, self.evd_mean)
            && close(fresh.evd_sd, self.evd_sd)
            && close(fresh.wall_clock_mean, self.wall_clock_mean)
            && close(fresh.wall_clock_sd, self.wall_clock_sd)
            && close(fresh.iterations_mean, self.iterations_mean)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

/// Everything a run needs, as stored next to its results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub algorithm: Algorithm,
    pub environment: PathBuf,
    /// Fixed demonstrations; when absent the exact expert distribution is
    /// used.
    #[serde(default)]
    pub demos: Option<PathBuf>,
    #[serde(default)]
    pub config: RunConfig,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
}

impl ExperimentManifest {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidInput("manifest lists no seeds".into()));
        }
        for path in std::iter::once(&self.environment).chain(&self.demos) {
            if !path.exists() {
                return Err(Error::InvalidInput(format!("{} does not exist", path.display())));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub records: Vec<RunRecord>,
    pub failures: Vec<SeedFailure>,
    pub summary: Summary,
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs every seed, up to `jobs` at a time. A failing seed is recorded and
/// does not stop the others.
pub fn run_seeds(
    instance: &ObjectworldInstance,
    algorithm: Algorithm,
    cfg: &RunConfig,
    data: &DataSource,
    seeds: &[u64],
    jobs: usize,
) -> Result<Vec<(u64, Result<RunOutcome>)>> {
    with_pool(jobs, || {
        seeds
            .par_iter()
            .map(|&seed| (seed, run_single(instance, algorithm, cfg, data, seed)))
            .collect()
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Executes a manifest and writes, under its output directory: the manifest
/// copy, `records.json`, `summary.csv`, and per seed a directory holding the
/// learned reward and any training log.
pub fn run_manifest(manifest: &ExperimentManifest, jobs: usize) -> Result<ExperimentResult> {
    manifest.validate()?;
    let instance: ObjectworldInstance = crate::io::read_json(&manifest.environment)?;
    let data = match &manifest.demos {
        Some(path) => DataSource::Demos(crate::io::read_json(path)?),
        None => DataSource::Exact,
    };
    let out = &manifest.output;
    crate::io::write_json(out.join("manifest.json"), manifest)?;

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (seed, outcome) in run_seeds(
        &instance,
        manifest.algorithm,
        &manifest.config,
        &data,
        &manifest.seeds,
        jobs,
    )? {
        match outcome {
            Ok(mut o) => {
                let dir = out.join(format!("seed-{seed}"));
                let reward_path = dir.join("reward.json");
                crate::io::write_json(&reward_path, &o.reward)?;
                o.record.artifacts.push(reward_path);
                if let Some(csv) = &o.log_csv {
                    let log_path = dir.join("training_log.csv");
                    write_text(&log_path, csv)?;
                    o.record.artifacts.push(log_path);
                }
                records.push(o.record);
            }
            Err(e) => failures.push(SeedFailure {
                seed,
                error: e.to_string(),
            }),
        }
    }
    let summary = Summary::from_records(manifest.algorithm, &records, failures.len());
    let result = ExperimentResult {
        records,
        failures,
        summary,
    };
    crate::io::write_json(out.join("records.json"), &result)?;
    let mut csv = Vec::new();
    result.summary.write_csv(&mut csv)?;
    write_text(&out.join("summary.csv"), &String::from_utf8_lossy(&csv))?;
    Ok(result)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub traj_count: usize,
    pub mean_evd: f64,
    pub sd: f64,
}

/// EVD against the number of demonstrated episodes, freshly sampled per
/// count and seed.
pub fn run_curve(
    instance: &ObjectworldInstance,
    algorithm: Algorithm,
    cfg: &RunConfig,
    counts: &[usize],
    seeds: &[u64],
    jobs: usize,
) -> Result<Vec<CurvePoint>> {
    if counts.is_empty() {
        return Err(Error::InvalidInput("no trajectory counts given".into()));
    }
    if counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(
            "trajectory counts must be strictly ascending".into(),
        ));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidInput("no seeds given".into()));
    }
    counts
        .iter()
        .map(|&episodes| {
            let data = DataSource::Sampled { episodes };
            let evds = run_seeds(instance, algorithm, cfg, &data, seeds, jobs)?
                .into_iter()
                .map(|(_, o)| o.map(|o| o.record.evd))
                .collect::<Result<Vec<_>>>()?;
            let (mean_evd, sd) = mean_sd(&evds);
            Ok(CurvePoint {
                traj_count: episodes,
                mean_evd,
                sd,
            })
        })
        .collect()
}

pub fn write_curve_csv<W: Write>(points: &[CurvePoint], mut out: W) -> std::io::Result<()> {
    writeln!(out, "traj_count,mean_evd,sd")?;
    for p in points {
        writeln!(out, "{},{},{}", p.traj_count, p.mean_evd, p.sd)?;
    }
    Ok(())
}
