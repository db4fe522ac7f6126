//! Task and agent parameter sets.
//!
//! Both deserialize from flat JSON documents using the field names `tau`,
//! `mu_ss`, `mu_ll`, `intermediate`, `structure`, `gamma`, `sigma1`, `sigma`
//! and `mu_e`. A single document may hold both sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which finite-state chain a task describes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Structure {
    /// Defection pays the smaller-sooner reward once and ends the task.
    #[default]
    OneShot,
    /// Defection at step `t` pays the smaller-sooner reward at every
    /// remaining step `t..=tau`, the reward-rate proxy for repeated play.
    IteratedProxy,
}

/// Dynamics of the bias process.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasModel {
    /// `W_1 ~ N(0, sigma1^2)`, `W_t ~ N(W_{t-1}, sigma^2)`.
    #[default]
    RandomWalk,
    /// `W_t ~ N(0, sigma^2)` independently at every step (test mode).
    Iid,
}

impl BiasModel {
    fn is_walk(&self) -> bool {
        *self == BiasModel::RandomWalk
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskParams {
    pub tau: usize,
    pub mu_ss: f64,
    pub mu_ll: f64,
    /// Per-step rewards `mu_1..mu_{tau-1}`; an empty list means all zero.
    #[serde(default)]
    pub intermediate: Vec<f64>,
    #[serde(default)]
    pub structure: Structure,
}

impl TaskParams {
    pub fn new(tau: usize, mu_ss: f64, mu_ll: f64) -> Self {
        Self {
            tau,
            mu_ss,
            mu_ll,
            intermediate: vec![0.0; tau.saturating_sub(1)],
            structure: Structure::OneShot,
        }
    }

    pub fn with_structure(mut self, structure: Structure) -> Self {
        self.structure = structure;
        self
    }

    pub fn with_intermediate(mut self, intermediate: Vec<f64>) -> Self {
        self.intermediate = intermediate;
        self
    }

    /// Reward for persisting through step `t` (1-based, `t < tau`).
    pub fn intermediate_at(&self, t: usize) -> f64 {
        self.intermediate.get(t - 1).copied().unwrap_or(0.0)
    }

    /// Fill an empty intermediate list with zeros, then validate.
    pub fn normalized(mut self) -> Result<Self> {
        if self.intermediate.is_empty() {
            self.intermediate = vec![0.0; self.tau.saturating_sub(1)];
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau < 1 {
            return Err(Error::InvalidParams("tau must be at least 1".into()));
        }
        if self.intermediate.len() != self.tau - 1 {
            return Err(Error::InvalidParams(format!(
                "intermediate has {} entries, expected {}",
                self.intermediate.len(),
                self.tau - 1
            )));
        }
        let all_finite = self.mu_ss.is_finite() && self.mu_ll.is_finite() && self.intermediate.iter().all(|m| m.is_finite());
        if !all_finite {
            return Err(Error::InvalidParams("rewards must be finite".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<Self>(text)?.normalized()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub gamma: f64,
    pub sigma1: f64,
    pub sigma: f64,
    pub mu_e: f64,
    #[serde(default, skip_serializing_if = "BiasModel::is_walk")]
    pub bias: BiasModel,
}

impl AgentParams {
    pub fn new(gamma: f64, sigma1: f64, sigma: f64, mu_e: f64) -> Self {
        Self {
            gamma,
            sigma1,
            sigma,
            mu_e,
            bias: BiasModel::RandomWalk,
        }
    }

    pub fn with_bias(mut self, bias: BiasModel) -> Self {
        self.bias = bias;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidParams(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if !(self.sigma1 >= 0.0 && self.sigma1.is_finite()) {
            return Err(Error::InvalidParams(format!("sigma1 = {}", self.sigma1)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParams(format!("sigma = {}", self.sigma)));
        }
        if !self.mu_e.is_finite() {
            return Err(Error::InvalidParams("mu_e must be finite".into()));
        }
        Ok(())
    }

    /// Spread of the bias at the first step.
    pub fn initial_sd(&self) -> f64 {
        match self.bias {
            BiasModel::RandomWalk => self.sigma1,
            BiasModel::Iid => self.sigma,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let agent: Self = serde_json::from_str(text)?;
        agent.validate()?;
        Ok(agent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combined_document_parses_both_sets() {
        let doc = r#"{"tau": 3, "mu_ss": 1, "mu_ll": 2, "structure": "ITERATED_PROXY",
                      "gamma": 0.9, "sigma1": 0.5, "sigma": 0.25, "mu_e": 0}"#;
        let task = TaskParams::from_json(doc).unwrap();
        let agent = AgentParams::from_json(doc).unwrap();
        assert_eq!(task.intermediate, vec![0.0, 0.0]);
        assert_eq!(task.structure, Structure::IteratedProxy);
        assert_eq!(agent.gamma, 0.9);
        assert_eq!(agent.bias, BiasModel::RandomWalk);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(TaskParams::new(0, 1.0, 2.0).validate().is_err());
        assert!(TaskParams::new(3, 1.0, 2.0).with_intermediate(vec![1.0]).validate().is_err());
        assert!(TaskParams::new(2, f64::NAN, 2.0).validate().is_err());
        assert!(AgentParams::new(1.0, 0.0, 0.0, 0.0).validate().is_err());
        assert!(AgentParams::new(0.5, -1.0, 0.0, 0.0).validate().is_err());
        assert!(AgentParams::new(0.5, 0.0, -0.1, 0.0).validate().is_err());
    }

    #[test]
    fn walk_bias_is_not_serialized() {
        let json = serde_json::to_string(&AgentParams::new(0.9, 1.0, 1.0, -1.0)).unwrap();
        assert_eq!(json, r#"{"gamma":0.9,"sigma1":1.0,"sigma":1.0,"mu_e":-1.0}"#);
        let iid = AgentParams::new(0.9, 1.0, 1.0, -1.0).with_bias(BiasModel::Iid);
        assert!(serde_json::to_string(&iid).unwrap().contains("\"bias\":\"iid\""));
    }
}
