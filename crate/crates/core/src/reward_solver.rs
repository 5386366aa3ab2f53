//! Per-state reward recovery from η values.
//!
//! For a state with `n` actions, relating every action's optimal Q-value to
//! every other action's through the Boltzmann log-probabilities gives the
//! linear system `X r = Y` with
//!
//! ```text
//! X[i][i] = 1,  X[i][j] = -1/(n-1)            (i != j)
//! Y[i]    = η_i - 1/(n-1) · Σ_{j != i} η_j
//! ```
//!
//! `X` has rank `n - 1` with the all-ones vector spanning its null space, and
//! `Y` always sums to zero, so the system is consistent. We return the
//! minimum-norm solution, which is the unique one orthogonal to the ones
//! vector.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Residual bound `‖X r − Y‖∞` enforced on every solve.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// η values for one state, one per action.
#[derive(Clone, Debug, PartialEq)]
pub struct EtaVector(Vec<f64>);

impl EtaVector {
    pub fn new(etas: Vec<f64>) -> Result<Self> {
        if etas.len() < 2 {
            return Err(Error::InvalidDimension(format!(
                "need at least two actions, got {}",
                etas.len()
            )));
        }
        if etas.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidInput("non-finite η".into()));
        }
        Ok(Self(etas))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Immediate rewards of one state, one per action.
pub type RewardVector = Vec<f64>;

pub fn build_coefficient_matrix(n: usize) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(Error::InvalidDimension(format!("need at least two actions, got {n}")));
    }
    let off = -1.0 / (n - 1) as f64;
    Ok(DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { off }))
}

pub fn build_target_vector(eta: &EtaVector) -> DVector<f64> {
    let n = eta.len();
    let etas = eta.as_slice();
    let total: f64 = etas.iter().sum();
    let scale = 1.0 / (n - 1) as f64;
    DVector::from_iterator(n, etas.iter().map(|&e| e - scale * (total - e)))
}

/// Minimum-norm least-squares solver for a fixed action count. The
/// pseudo-inverse of `X` is computed once by SVD and reused for every state.
#[derive(Clone, Debug)]
pub struct RewardSolver {
    coefficients: DMatrix<f64>,
    pseudo_inverse: DMatrix<f64>,
}

impl RewardSolver {
    pub fn new(n_actions: usize) -> Result<Self> {
        let coefficients = build_coefficient_matrix(n_actions)?;
        let pseudo_inverse = coefficients
            .clone()
            .pseudo_inverse(1e-10)
            .map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(Self {
            coefficients,
            pseudo_inverse,
        })
    }

    pub fn n_actions(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn solve(&self, eta: &EtaVector) -> Result<RewardVector> {
        if eta.len() != self.n_actions() {
            return Err(Error::InvalidDimension(format!(
                "solver built for {} actions, got {}",
                self.n_actions(),
                eta.len()
            )));
        }
        let target = build_target_vector(eta);
        let rewards = &self.pseudo_inverse * &target;
        let residual = (&self.coefficients * &rewards - &target).amax();
        if !(residual <= RESIDUAL_TOL) {
            return Err(Error::Numerical(format!("reward system residual {residual:e}")));
        }
        Ok(rewards.iter().copied().collect())
    }
}

pub fn solve_state_rewards(eta: &EtaVector) -> Result<RewardVector> {
    RewardSolver::new(eta.len())?.solve(eta)
}
