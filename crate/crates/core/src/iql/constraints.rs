use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mdp::{PolicyTable, QTable};

type CostFn = Arc<dyn Fn(usize, usize) -> f64 + Send + Sync>;

/// A cost `c(s, a)` with threshold `β`; action `a` is safe in `s` when
/// `c(s, a) ≤ β`.
#[derive(Clone)]
pub struct Constraint {
    pub name: String,
    cost: CostFn,
    pub threshold: f64,
}

impl Constraint {
    pub fn new(
        name: impl Into<String>,
        threshold: f64,
        cost: impl Fn(usize, usize) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            cost: Arc::new(cost),
            threshold,
        }
    }

    /// Cost given as a `[state][action]` table, row-major.
    pub fn from_table(name: impl Into<String>, threshold: f64, n_actions: usize, costs: Vec<f64>) -> Self {
        Self::new(name, threshold, move |s, a| costs[s * n_actions + a])
    }

    pub fn cost(&self, state: usize, action: usize) -> f64 {
        (self.cost)(state, action)
    }

    pub fn allows(&self, state: usize, action: usize) -> bool {
        self.cost(state, action) <= self.threshold
    }
}

impl fmt::Debug for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Constraint")
            .field("name", &self.name)
            .field("threshold", &self.threshold)
            .finish_non_exhaustive()
    }
}

/// The safe set of a state is the intersection of every constraint's safe
/// set. An empty list constrains nothing.
#[derive(Clone, Debug)]
pub struct ConstraintSet {
    n_actions: usize,
    constraints: Vec<Constraint>,
}

impl ConstraintSet {
    pub fn new(n_actions: usize, constraints: Vec<Constraint>) -> Self {
        Self { n_actions, constraints }
    }

    pub fn unconstrained(n_actions: usize) -> Self {
        Self::new(n_actions, Vec::new())
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn is_safe(&self, state: usize, action: usize) -> bool {
        self.constraints.iter().all(|c| c.allows(state, action))
    }

    pub fn safe_set(&self, state: usize) -> Result<Vec<usize>> {
        let safe: Vec<usize> = (0..self.n_actions).filter(|&a| self.is_safe(state, a)).collect();
        if safe.is_empty() {
            return Err(Error::Infeasible { state });
        }
        Ok(safe)
    }

    /// Checks every state up front, listing all that have no safe action.
    pub fn validate(&self, n_states: usize) -> Result<()> {
        let bad: Vec<usize> = (0..n_states)
            .filter(|&s| (0..self.n_actions).all(|a| !self.is_safe(s, a)))
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InfeasibleStates { states: bad })
        }
    }

    /// `max_{a ∈ S(state)} q(state, a)`.
    pub fn safe_max(&self, q: &QTable, state: usize) -> Result<f64> {
        let row = q.row(state);
        Ok(self
            .safe_set(state)?
            .into_iter()
            .map(|a| row[a])
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// Number of states where `actions[s]` is unsafe.
    pub fn count_violations(&self, actions: &[usize]) -> usize {
        actions
            .iter()
            .enumerate()
            .filter(|&(s, &a)| !self.is_safe(s, a))
            .count()
    }
}

pub fn safe_set(constraints: &ConstraintSet, state: usize) -> Result<Vec<usize>> {
    constraints.safe_set(state)
}

/// Argmax over the safe set per state, lowest index on ties.
pub fn constrained_greedy_actions(qc: &QTable, constraints: &ConstraintSet) -> Result<Vec<usize>> {
    (0..qc.n_states())
        .map(|s| {
            let row = qc.row(s);
            let safe = constraints.safe_set(s)?;
            let mut best = safe[0];
            for &a in &safe[1..] {
                if row[a] > row[best] {
                    best = a;
                }
            }
            Ok(best)
        })
        .collect()
}

pub fn constrained_greedy_policy(qc: &QTable, constraints: &ConstraintSet) -> Result<PolicyTable> {
    let actions = constrained_greedy_actions(qc, constraints)?;
    PolicyTable::deterministic(&actions, qc.n_actions())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn safe_set_examples() {
        assert_eq!(ConstraintSet::unconstrained(4).safe_set(0).unwrap(), vec![0, 1, 2, 3]);

        let by_index = ConstraintSet::new(4, vec![Constraint::new("index", 1.0, |_, a| a as f64)]);
        assert_eq!(by_index.safe_set(3).unwrap(), vec![0, 1]);

        let disjoint = ConstraintSet::new(
            4,
            vec![
                Constraint::new("low", 1.0, |_, a| a as f64),
                Constraint::new("high", -2.0, |_, a| -(a as f64)),
            ],
        );
        assert!(matches!(disjoint.safe_set(5), Err(Error::Infeasible { state: 5 })));
        assert!(matches!(disjoint.validate(2), Err(Error::InfeasibleStates { states }) if states == vec![0, 1]));
    }

    #[test]
    fn greedy_examples() {
        let q = QTable::from_values(2, 3, vec![0.0, 5.0, 1.0, 2.0, 2.0, 1.0]).unwrap();
        let free = ConstraintSet::unconstrained(3);
        assert_eq!(constrained_greedy_actions(&q, &free).unwrap(), vec![1, 0]);

        let no_one = ConstraintSet::new(3, vec![Constraint::new("no-1", 0.5, |_, a| (a == 1) as u8 as f64)]);
        assert_eq!(constrained_greedy_actions(&q, &no_one).unwrap(), vec![2, 0]);
        let pi = constrained_greedy_policy(&q, &no_one).unwrap();
        assert_eq!(pi.row(0), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn table_constraint() {
        let c = Constraint::from_table("t", 0.0, 2, vec![0.0, 1.0, 1.0, 0.0]);
        let set = ConstraintSet::new(2, vec![c]);
        assert_eq!(set.safe_set(0).unwrap(), vec![0]);
        assert_eq!(set.safe_set(1).unwrap(), vec![1]);
        assert_eq!(set.count_violations(&[1, 1]), 1);
    }
}
