//! Check that the iterated-proxy chain reproduces the recurrent iterated
//! task up to the factor `1 - gamma^tau`.
//!
//! Without bias noise the recurrent task has two stationary policies. Always
//! taking SS is worth `mu_ss / (1 - gamma)`. Always waiting for LL repeats a
//! `tau`-step cycle worth `L = sum_{i < tau - 1} gamma^i mu_e + gamma^(tau - 1) mu_ll`,
//! so its value is `L / (1 - gamma^tau)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{AgentParams, Structure, TaskParams};
use crate::problem::{geometric_sum, Action, Dgmdp};
use crate::solver::pla::solve_pla_problem;
use crate::solver::ValueSolution;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub iterated_value: f64,
    pub proxy_value: f64,
    /// `proxy_value / iterated_value`.
    pub ratio: f64,
    /// `1 - gamma^tau`.
    pub expected_ratio: f64,
    pub iterated_action: Action,
    pub proxy_action: Action,
}

impl EquivalenceReport {
    pub fn holds(&self, tol: f64) -> bool {
        (self.ratio - self.expected_ratio).abs() <= tol && self.iterated_action == self.proxy_action
    }
}

pub fn iterated_equivalence_check(task: &TaskParams, agent: &AgentParams) -> Result<EquivalenceReport> {
    task.validate()?;
    agent.validate()?;
    if agent.sigma != 0.0 || agent.sigma1 != 0.0 {
        return Err(Error::EquivalenceConditions(format!(
            "sigma = {}, sigma1 = {}",
            agent.sigma, agent.sigma1
        )));
    }
    if task.intermediate.iter().any(|&m| m != 0.0) {
        return Err(Error::EquivalenceConditions("intermediate rewards present".into()));
    }
    let gamma = agent.gamma;
    let tau = task.tau;
    let cycle = gamma.powi(tau as i32);

    let ss = task.mu_ss / (1.0 - gamma);
    let ll = (agent.mu_e * geometric_sum(gamma, tau - 1) + gamma.powi(tau as i32 - 1) * task.mu_ll) / (1.0 - cycle);
    let iterated_action = Action::choose(ss, ll);
    let iterated_value = ss.max(ll);

    let proxy = Dgmdp::new(&task.clone().with_structure(Structure::IteratedProxy), agent)?;
    let sol = solve_pla_problem(proxy);
    let av = sol.action_values(1, 0.0)?;
    let proxy_action = Action::choose(av.q_defect, av.q_persist);
    let proxy_value = sol.value(1, 0.0);

    Ok(EquivalenceReport {
        iterated_value,
        proxy_value,
        ratio: proxy_value / iterated_value,
        expected_ratio: 1.0 - cycle,
        iterated_action,
        proxy_action,
    })
}
