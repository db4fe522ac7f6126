//! Delay-gratification decision model: a bias-corrupted agent repeatedly
//! chooses between taking a small sure payoff now and persisting toward a
//! larger one.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod equivalence;
pub mod error;
pub mod fitting;
pub mod game;
pub mod hazard;
pub mod incentive;
pub mod normal;
pub mod params;
pub mod problem;
pub mod solver;

pub use error::{Error, Result};
pub use params::{AgentParams, BiasModel, Structure, TaskParams};
pub use problem::{Action, Dgmdp};
pub use solver::{solve, SolverKind, Threshold, ValueSolution};
