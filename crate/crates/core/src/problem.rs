//! A task and an agent resolved into per-step rewards.
//!
//! Solvers work on [`Dgmdp`] rather than on the raw parameter sets so that
//! callers with time-varying defection payoffs (the interest-accrual
//! incentive model) can share the same backward induction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{AgentParams, BiasModel, Structure, TaskParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Defect,
    Persist,
}

impl Action {
    /// Ties go to persisting.
    pub fn choose(q_defect: f64, q_persist: f64) -> Self {
        if q_defect > q_persist {
            Action::Defect
        } else {
            Action::Persist
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dgmdp {
    tau: usize,
    /// Defection payoff before the bias penalty, indexed by `t - 1`.
    defect: Vec<f64>,
    /// Immediate reward for persisting through step `t < tau`, effort included.
    persist: Vec<f64>,
    terminal: f64,
    agent: AgentParams,
}

impl Dgmdp {
    pub fn new(task: &TaskParams, agent: &AgentParams) -> Result<Self> {
        task.validate()?;
        agent.validate()?;
        let tau = task.tau;
        let gamma = agent.gamma;
        let defect = (1..=tau)
            .map(|t| match task.structure {
                Structure::OneShot => task.mu_ss,
                Structure::IteratedProxy => task.mu_ss * geometric_sum(gamma, tau - t + 1),
            })
            .collect();
        let persist = (1..tau)
            .map(|t| persist_reward(task.intermediate_at(t), agent.mu_e))
            .collect();
        Ok(Self {
            tau,
            defect,
            persist,
            terminal: task.mu_ll,
            agent: *agent,
        })
    }

    /// Build from explicit per-step payoffs. `defect` has `tau` entries and
    /// `persist` has `tau - 1` entries with effort already folded in.
    pub fn from_parts(defect: Vec<f64>, persist: Vec<f64>, terminal: f64, agent: &AgentParams) -> Result<Self> {
        agent.validate()?;
        let tau = defect.len();
        if tau == 0 || persist.len() + 1 != tau {
            return Err(Error::InvalidParams(format!(
                "need tau >= 1 defect payoffs and tau - 1 persist rewards, got {} and {}",
                defect.len(),
                persist.len()
            )));
        }
        if !(defect.iter().chain(&persist).all(|v| v.is_finite()) && terminal.is_finite()) {
            return Err(Error::InvalidParams("rewards must be finite".into()));
        }
        Ok(Self {
            tau,
            defect,
            persist,
            terminal,
            agent: *agent,
        })
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn agent(&self) -> &AgentParams {
        &self.agent
    }

    pub fn gamma(&self) -> f64 {
        self.agent.gamma
    }

    pub fn sigma(&self) -> f64 {
        self.agent.sigma
    }

    pub fn bias(&self) -> BiasModel {
        self.agent.bias
    }

    pub fn terminal(&self) -> f64 {
        self.terminal
    }

    /// Unbiased defection payoff at step `t`.
    pub fn defect_payoff(&self, t: usize) -> f64 {
        self.defect[t - 1]
    }

    /// Immediate persist reward at `t < tau`.
    pub fn persist_reward(&self, t: usize) -> f64 {
        self.persist[t - 1]
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.tau {
            Err(Error::StepOutOfRange { t, tau: self.tau })
        } else {
            Ok(())
        }
    }

    /// Value of persisting from `t` through to the end, ignoring the bias.
    pub fn steadfast_values(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.tau];
        c[self.tau - 1] = self.terminal;
        for t in (1..self.tau).rev() {
            c[t - 1] = self.persist_reward(t) + self.gamma() * c[t];
        }
        c
    }

    /// Largest payoff magnitude, used to scale tolerances.
    pub fn payoff_scale(&self) -> f64 {
        self.defect
            .iter()
            .chain(&self.persist)
            .chain(std::iter::once(&self.terminal))
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE)
    }
}

/// Effort is waived on steps that pay a bonus.
pub fn persist_reward(bonus: f64, mu_e: f64) -> f64 {
    if bonus != 0.0 {
        bonus
    } else {
        mu_e
    }
}

/// `1 + g + ... + g^(n-1)`.
pub fn geometric_sum(gamma: f64, n: usize) -> f64 {
    (0..n).fold((0.0, 1.0), |(s, p), _| (s + p, p * gamma)).0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iterated_proxy_defection_collects_remaining_steps() {
        let task = TaskParams::new(3, 1.0, 5.0).with_structure(Structure::IteratedProxy);
        let p = Dgmdp::new(&task, &AgentParams::new(0.5, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!(p.defect_payoff(1), 1.75);
        assert_eq!(p.defect_payoff(2), 1.5);
        assert_eq!(p.defect_payoff(3), 1.0);
    }

    #[test]
    fn effort_waived_on_bonus_steps() {
        let task = TaskParams::new(4, 1.0, 5.0).with_intermediate(vec![0.0, 0.5, 0.0]);
        let p = Dgmdp::new(&task, &AgentParams::new(0.9, 0.0, 0.0, -0.2)).unwrap();
        assert_eq!(p.persist_reward(1), -0.2);
        assert_eq!(p.persist_reward(2), 0.5);
        assert_eq!(p.persist_reward(3), -0.2);
    }

    #[test]
    fn steadfast_recursion() {
        let task = TaskParams::new(3, 1.0, 2.0).with_intermediate(vec![0.3, 0.0]);
        let p = Dgmdp::new(&task, &AgentParams::new(0.5, 0.0, 0.0, -0.1)).unwrap();
        let c = p.steadfast_values();
        assert_eq!(c[2], 2.0);
        assert!((c[1] - (-0.1 + 0.5 * 2.0)).abs() < 1e-15);
        assert!((c[0] - (0.3 + 0.5 * c[1])).abs() < 1e-15);
    }

    #[test]
    fn from_parts_checks_lengths() {
        let a = AgentParams::new(0.5, 0.0, 0.0, 0.0);
        assert!(Dgmdp::from_parts(vec![1.0, 1.0], vec![], 2.0, &a).is_err());
        assert!(Dgmdp::from_parts(vec![], vec![], 2.0, &a).is_err());
        assert!(Dgmdp::from_parts(vec![1.0], vec![], 2.0, &a).is_ok());
    }
}
