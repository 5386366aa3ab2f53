//! Objectworld: an N×N grid scattered with objects, each carrying an inner
//! and an outer color out of C.
//!
//! States enumerate cells row-major. Actions are up, down, left, right and
//! stay; moves off the grid leave the agent in place. With probability
//! `wind` the realized move is drawn uniformly from all five actions.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iql::{Constraint, ConstraintSet};
use crate::mdp::{
    boltzmann_policy, value_iteration, PolicyTable, QTable, RewardTable, TabularMdp, TrajectorySet, DEFAULT_MAX_ITERS,
    DEFAULT_TOL,
};

pub const N_ACTIONS: usize = 5;
pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;
pub const STAY: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeatureKind {
    /// Distance to the nearest object of each inner and outer color.
    Continuous,
    /// 1 when that distance is at most `threshold`, else 0.
    Binary { threshold: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectworldSpec {
    pub grid_size: usize,
    pub colors: usize,
    pub objects: usize,
    pub wind: f64,
    pub gamma: f64,
    pub seed: u64,
    pub features: FeatureKind,
}

impl Default for ObjectworldSpec {
    fn default() -> Self {
        Self {
            grid_size: 8,
            colors: 2,
            objects: 12,
            wind: 0.3,
            gamma: 0.9,
            seed: 0,
            features: FeatureKind::Continuous,
        }
    }
}

impl ObjectworldSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size == 0 {
            return Err(Error::InvalidInput("grid size must be positive".into()));
        }
        if self.colors < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 colors, got {}",
                self.colors
            )));
        }
        let cells = self.grid_size * self.grid_size;
        if self.objects > cells {
            return Err(Error::InvalidInput(format!(
                "{} objects do not fit on {cells} cells",
                self.objects
            )));
        }
        if !(0.0..=1.0).contains(&self.wind) {
            return Err(Error::InvalidInput(format!("wind {} outside [0, 1]", self.wind)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidInput(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Object {
    pub cell: usize,
    pub inner: usize,
    pub outer: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectworldInstance {
    pub spec: ObjectworldSpec,
    pub objects: Vec<Object>,
    pub mdp: TabularMdp,
    pub true_reward: RewardTable,
    pub features: Vec<Vec<f64>>,
}

/// Cell reached by `action` from `cell`, clamped at the border.
pub fn destination(n: usize, cell: usize, action: usize) -> usize {
    let (row, col) = (cell / n, cell % n);
    let (row, col) = match action {
        UP => (row.saturating_sub(1), col),
        DOWN => ((row + 1).min(n - 1), col),
        LEFT => (row, col.saturating_sub(1)),
        RIGHT => (row, (col + 1).min(n - 1)),
        _ => (row, col),
    };
    row * n + col
}

pub fn cell_distance(n: usize, a: usize, b: usize) -> f64 {
    let dr = (a / n) as f64 - (b / n) as f64;
    let dc = (a % n) as f64 - (b % n) as f64;
    dr.hypot(dc)
}

/// Nearest-object distances per color, inner colors first then outer;
/// `n` when no object has the color.
fn color_distances(spec: &ObjectworldSpec, objects: &[Object], cell: usize) -> Vec<f64> {
    let (n, c) = (spec.grid_size, spec.colors);
    let mut out = vec![n as f64; 2 * c];
    for o in objects {
        let d = cell_distance(n, cell, o.cell);
        out[o.inner] = out[o.inner].min(d);
        out[c + o.outer] = out[c + o.outer].min(d);
    }
    out
}

/// Feature vector of length `2C` for `state`.
pub fn features(instance: &ObjectworldInstance, state: usize) -> Vec<f64> {
    instance.features[state].clone()
}

fn feature_row(spec: &ObjectworldSpec, objects: &[Object], cell: usize) -> Vec<f64> {
    let d = color_distances(spec, objects, cell);
    match spec.features {
        FeatureKind::Continuous => d,
        FeatureKind::Binary { threshold } => d.into_iter().map(|x| f64::from(u8::from(x <= threshold))).collect(),
    }
}

fn true_state_reward(spec: &ObjectworldSpec, objects: &[Object], cell: usize) -> f64 {
    let d = color_distances(spec, objects, cell);
    let (first, second) = (d[spec.colors], d[spec.colors + 1]);
    if first <= 3.0 && second <= 2.0 {
        1.0
    } else if first <= 3.0 {
        -1.0
    } else {
        0.0
    }
}

fn transition_model(spec: &ObjectworldSpec) -> Result<TabularMdp> {
    let n = spec.grid_size;
    let cells = n * n;
    let slip = spec.wind / N_ACTIONS as f64;
    let mut rows = Vec::with_capacity(cells * N_ACTIONS);
    for cell in 0..cells {
        for a in 0..N_ACTIONS {
            let mut row = vec![(destination(n, cell, a), 1.0 - spec.wind)];
            if slip > 0.0 {
                row.extend((0..N_ACTIONS).map(|b| (destination(n, cell, b), slip)));
            }
            rows.push(row);
        }
    }
    TabularMdp::new(cells, N_ACTIONS, rows, vec![false; cells], spec.gamma)
}

/// Places objects on distinct random cells with random colors and builds
/// the model, features and true reward.
pub fn generate(spec: &ObjectworldSpec) -> Result<ObjectworldInstance> {
    spec.validate()?;
    let cells = spec.grid_size * spec.grid_size;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut placed: Vec<usize> = sample(&mut rng, cells, spec.objects).into_vec();
    placed.sort_unstable();
    let objects: Vec<Object> = placed
        .into_iter()
        .map(|cell| Object {
            cell,
            inner: rng.random_range(0..spec.colors),
            outer: rng.random_range(0..spec.colors),
        })
        .collect();
    let features = (0..cells).map(|s| feature_row(spec, &objects, s)).collect();
    let rewards: Vec<f64> = (0..cells).map(|s| true_state_reward(spec, &objects, s)).collect();
    Ok(ObjectworldInstance {
        mdp: transition_model(spec)?,
        true_reward: RewardTable::broadcast_states(&rewards, N_ACTIONS),
        features,
        objects,
        spec: spec.clone(),
    })
}

impl ObjectworldInstance {
    pub fn n_states(&self) -> usize {
        self.mdp.n_states()
    }

    pub fn feature_dim(&self) -> usize {
        2 * self.spec.colors
    }
}

/// Boltzmann policy of the optimal Q-function under the true reward.
pub fn expert(instance: &ObjectworldInstance) -> Result<(PolicyTable, QTable)> {
    let q = value_iteration(&instance.mdp, &instance.true_reward, DEFAULT_TOL, DEFAULT_MAX_ITERS)?;
    Ok((boltzmann_policy(&q), q))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum ConstraintRule {
    /// Never take `action`.
    ForbidAction { action: usize },
    /// Never move onto a cell within `radius` of an object with outer color
    /// `color`. Staying put is always allowed.
    AvoidOuterColor { color: usize, radius: f64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpecOW {
    pub rules: Vec<ConstraintRule>,
}

impl ConstraintRule {
    fn forbids(&self, instance: &ObjectworldInstance, state: usize, action: usize) -> bool {
        match *self {
            ConstraintRule::ForbidAction { action: forbidden } => action == forbidden,
            ConstraintRule::AvoidOuterColor { color, radius } => {
                let n = instance.spec.grid_size;
                let dest = destination(n, state, action);
                dest != state
                    && instance
                        .objects
                        .iter()
                        .any(|o| o.outer == color && cell_distance(n, dest, o.cell) <= radius)
            }
        }
    }

    fn name(&self) -> String {
        match self {
            ConstraintRule::ForbidAction { action } => format!("forbid-action-{action}"),
            ConstraintRule::AvoidOuterColor { color, radius } => format!("avoid-outer-{color}-within-{radius}"),
        }
    }
}

/// Constraint set with one 0/1 cost per rule (threshold 0), checked for
/// feasibility in every state.
pub fn constrained_variant(instance: &ObjectworldInstance, cspec: &ConstraintSpecOW) -> Result<ConstraintSet> {
    let n_states = instance.n_states();
    let constraints = cspec
        .rules
        .iter()
        .map(|rule| {
            if let ConstraintRule::ForbidAction { action } = rule {
                if *action >= N_ACTIONS {
                    return Err(Error::InvalidInput(format!("action {action} out of range")));
                }
            }
            let costs = (0..n_states)
                .flat_map(|s| (0..N_ACTIONS).map(move |a| (s, a)))
                .map(|(s, a)| f64::from(u8::from(rule.forbids(instance, s, a))))
                .collect();
            Ok(Constraint::from_table(rule.name(), 0.0, N_ACTIONS, costs))
        })
        .collect::<Result<Vec<_>>>()?;
    let set = ConstraintSet::new(N_ACTIONS, constraints);
    set.validate(n_states)?;
    Ok(set)
}

/// Number of demonstrated steps taking an unsafe action.
pub fn count_demo_violations(demos: &TrajectorySet, constraints: &ConstraintSet) -> usize {
    demos
        .steps()
        .filter(|s| !constraints.is_safe(s.state, s.action))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn large_grid_dimensions() {
        let spec = ObjectworldSpec {
            grid_size: 32,
            objects: 50,
            ..ObjectworldSpec::default()
        };
        let inst = generate(&spec).unwrap();
        assert_eq!(inst.n_states(), 1024);
        assert_eq!(inst.mdp.n_actions(), 5);
        assert_eq!(inst.features[0].len(), 4);
        assert_eq!(inst.objects.len(), 50);
    }

    #[test]
    fn too_many_objects() {
        let spec = ObjectworldSpec {
            grid_size: 8,
            objects: 100,
            ..ObjectworldSpec::default()
        };
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn windless_moves_clamp() {
        let spec = ObjectworldSpec {
            wind: 0.0,
            ..ObjectworldSpec::default()
        };
        let inst = generate(&spec).unwrap();
        assert_eq!(inst.mdp.successors(0, UP), &[(0, 1.0)]);
        assert_eq!(inst.mdp.successors(0, RIGHT), &[(1, 1.0)]);
        assert_eq!(inst.mdp.successors(9, DOWN), &[(17, 1.0)]);
    }

    #[test]
    fn wind_keeps_intended_mass() {
        let inst = generate(&ObjectworldSpec::default()).unwrap();
        // interior cell: intended destination gets 0.7 + 0.3/5
        let p: f64 = inst
            .mdp
            .successors(9, RIGHT)
            .iter()
            .filter(|(n, _)| *n == 10)
            .map(|(_, p)| p)
            .sum();
        assert!((p - 0.76).abs() < 1e-12);
    }

    #[test]
    fn features_on_object_and_neighbour() {
        let spec = ObjectworldSpec {
            grid_size: 5,
            objects: 1,
            wind: 0.0,
            ..ObjectworldSpec::default()
        };
        let inst = generate(&spec).unwrap();
        let o = inst.objects[0];
        let f = features(&inst, o.cell);
        assert_eq!(f[o.inner], 0.0);
        assert_eq!(f[2 + o.outer], 0.0);
        let neighbour = if o.cell.is_multiple_of(5) {
            o.cell + 1
        } else {
            o.cell - 1
        };
        let f = features(&inst, neighbour);
        assert_eq!(f[o.inner], 1.0);
        assert_eq!(f[1 - o.inner], 5.0);
    }

    #[test]
    fn forbid_stay() {
        let inst = generate(&ObjectworldSpec::default()).unwrap();
        let none = constrained_variant(&inst, &ConstraintSpecOW::default()).unwrap();
        assert!(none.is_empty());
        let cspec = ConstraintSpecOW {
            rules: vec![ConstraintRule::ForbidAction { action: STAY }],
        };
        let set = constrained_variant(&inst, &cspec).unwrap();
        for s in 0..inst.n_states() {
            assert_eq!(set.safe_set(s).unwrap(), vec![UP, DOWN, LEFT, RIGHT]);
        }
    }

    #[test]
    fn infeasible_rules_reported() {
        let inst = generate(&ObjectworldSpec::default()).unwrap();
        let cspec = ConstraintSpecOW {
            rules: (0..N_ACTIONS)
                .map(|action| ConstraintRule::ForbidAction { action })
                .collect(),
        };
        assert!(matches!(
            constrained_variant(&inst, &cspec),
            Err(Error::InfeasibleStates { states }) if states.len() == 64
        ));
    }

    #[test]
    fn binary_features() {
        let spec = ObjectworldSpec {
            features: FeatureKind::Binary { threshold: 1.5 },
            ..ObjectworldSpec::default()
        };
        let inst = generate(&spec).unwrap();
        let cont = generate(&ObjectworldSpec::default()).unwrap();
        for (b, c) in inst.features.iter().zip(&cont.features) {
            assert_eq!(b.len(), 4);
            for (x, d) in b.iter().zip(c) {
                assert_eq!(*x, if *d <= 1.5 { 1.0 } else { 0.0 });
            }
        }
    }
}
