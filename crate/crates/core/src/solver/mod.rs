//! Backward induction for the persist/defect problem.
//!
//! Two solvers share the [`ValueSolution`] interface: [`grid`] discretizes
//! the bias densely and serves as the reference, [`pla`] carries a
//! three-line approximation of `V(t, .)` through closed-form Gaussian
//! expectations.

pub mod grid;
pub mod pla;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::params::{AgentParams, TaskParams};
use crate::problem::Dgmdp;

pub use grid::{solve_grid, GridSpec, GridValueSolution};
pub use pla::{solve_pla, PwlStep, PwlValueSolution, SegmentFit};

/// Which solver to run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Grid,
    #[default]
    Pla,
}

impl std::str::FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "grid" => Ok(SolverKind::Grid),
            "pla" => Ok(SolverKind::Pla),
            other => Err(format!("unknown solver `{other}` (expected grid or pla)")),
        }
    }
}

/// Side on which a threshold search ran off its range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Saturation {
    /// Persisting wins everywhere searched.
    AlwaysPersist,
    /// Defecting wins everywhere searched.
    AlwaysDefect,
}

/// Bias level at which defecting and persisting are equally valuable.
/// The agent defects when `w < threshold` and persists on ties.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub w: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation: Option<Saturation>,
}

impl Threshold {
    pub fn exact(w: f64) -> Self {
        Self { w, saturation: None }
    }

    /// Threshold as used by behaviour: saturated sides map to +-infinity.
    pub fn effective(&self) -> f64 {
        match self.saturation {
            None => self.w,
            Some(Saturation::AlwaysPersist) => f64::NEG_INFINITY,
            Some(Saturation::AlwaysDefect) => f64::INFINITY,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ActionValues {
    pub q_defect: f64,
    pub q_persist: f64,
}

pub trait ValueSolution: Send + Sync {
    fn problem(&self) -> &Dgmdp;

    /// `E[V(t + 1, W_{t+1}) | W_t = w]` for `t < tau`.
    fn continuation(&self, t: usize, w: f64) -> f64;

    /// `V(t, w)` in this solution's own representation.
    fn value(&self, t: usize, w: f64) -> f64;

    fn thresholds(&self) -> &[Threshold];

    fn action_values(&self, t: usize, w: f64) -> Result<ActionValues> {
        let p = self.problem();
        p.check_step(t)?;
        let q_defect = p.defect_payoff(t) - w;
        let q_persist = if t == p.tau() {
            p.terminal()
        } else {
            p.persist_reward(t) + p.gamma() * self.continuation(t, w)
        };
        Ok(ActionValues { q_defect, q_persist })
    }

    /// Effective thresholds, one per step.
    fn threshold_values(&self) -> Vec<f64> {
        self.thresholds().iter().map(Threshold::effective).collect()
    }
}

/// Solve with the requested solver using default settings.
pub fn solve(kind: SolverKind, task: &TaskParams, agent: &AgentParams) -> Result<Box<dyn ValueSolution>> {
    let problem = Dgmdp::new(task, agent)?;
    solve_problem(kind, problem)
}

pub fn solve_problem(kind: SolverKind, problem: Dgmdp) -> Result<Box<dyn ValueSolution>> {
    Ok(match kind {
        SolverKind::Grid => Box::new(grid::solve_grid_problem(problem, &GridSpec::default())?),
        SolverKind::Pla => Box::new(pla::solve_pla_problem(problem)),
    })
}

/// Root of a strictly decreasing function on `[lo, hi]` with
/// `f(lo) >= 0 > f(hi)`.
pub(crate) fn bisect_decreasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}
