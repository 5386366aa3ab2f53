//! Inverse reinforcement learning for Boltzmann-rational experts in finite
//! MDPs: closed-form per-state reward recovery (IAVI), its sampling-based
//! tabular and deep variants (IQL, DIQL) with optional action constraints,
//! a MaxEnt IRL baseline and the Objectworld benchmark.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod deep_iql;
pub mod error;
pub mod experiment;
pub mod iavi;
pub mod io;
pub mod iql;
pub mod maxent;
pub mod mdp;
pub mod nn;
pub mod objectworld;
pub mod reward_solver;

pub use error::{Error, Result};
