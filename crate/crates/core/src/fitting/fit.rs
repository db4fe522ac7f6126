//! Least-squares fits of agent parameters to hazard curves.

use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::empirical::EmpiricalHazard;
use super::nelder_mead::Simplex;
use crate::error::{Error, Result};
use crate::game::protocol::ExperimentProtocol;
use crate::hazard::hazard_curve;
use crate::params::{AgentParams, TaskParams};

/// Which agent parameters the fit may move.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeMask {
    pub gamma: bool,
    pub sigma1: bool,
    pub sigma: bool,
    pub mu_e: bool,
}

impl FreeMask {
    pub const ALL: FreeMask = FreeMask {
        gamma: true,
        sigma1: true,
        sigma: true,
        mu_e: true,
    };
    pub const NONE: FreeMask = FreeMask {
        gamma: false,
        sigma1: false,
        sigma: false,
        mu_e: false,
    };

    pub fn count(&self) -> usize {
        [self.gamma, self.sigma1, self.sigma, self.mu_e]
            .iter()
            .filter(|&&b| b)
            .count()
    }
}

impl FromStr for FreeMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut m = FreeMask::NONE;
        for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
            match name {
                "gamma" => m.gamma = true,
                "sigma1" => m.sigma1 = true,
                "sigma" => m.sigma = true,
                "mu_e" => m.mu_e = true,
                "all" => m = FreeMask::ALL,
                other => return Err(Error::InvalidParams(format!("unknown parameter `{other}`"))),
            }
        }
        Ok(m)
    }
}

/// One observed hazard curve and the task that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveTarget {
    pub task: TaskParams,
    pub h: Vec<Option<f64>>,
    /// Residual weight per position.
    pub weight: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub restarts: usize,
    /// Posterior quantiles used when predicting hazards.
    pub q: usize,
    pub seed: u64,
    pub max_evals: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            q: 200,
            seed: 0,
            max_evals: 400,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: AgentParams,
    pub free: FreeMask,
    pub sse: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub restarts: usize,
    pub converged: bool,
}

/// Targets for every cell of `emp`, with equal weights or weights
/// proportional to the pooled at-risk counts.
pub fn targets_from_empirical(emp: &EmpiricalHazard, protocol: &ExperimentProtocol, weight_by_at_risk: bool) -> Vec<CurveTarget> {
    emp.cells
        .iter()
        .filter(|c| c.h.iter().filter(|h| h.is_some()).count() >= 1)
        .map(|c| CurveTarget {
            task: protocol.task(c.condition, c.tau),
            h: c.h.clone(),
            weight: if weight_by_at_risk {
                c.at_risk.iter().map(|&n| n as f64).collect()
            } else {
                vec![1.0; c.tau]
            },
        })
        .collect()
}

/// Weighted squared hazard residuals over all defined cells.
pub fn sse(agent: &AgentParams, targets: &[CurveTarget], q: usize) -> Result<f64> {
    let mut total = 0.0;
    for target in targets {
        let predicted = hazard_curve(&target.task, agent, q)?;
        for ((obs, pred), w) in target.h.iter().zip(&predicted.h).zip(&target.weight) {
            if let Some(obs) = obs {
                total += w * (pred - obs).powi(2);
            }
        }
    }
    Ok(total)
}

/// Unconstrained coordinates for the free parameters.
struct Transform {
    base: AgentParams,
    free: FreeMask,
}

const SIGMA_FLOOR: f64 = 1e-6;

impl Transform {
    fn encode(&self, a: &AgentParams) -> Vec<f64> {
        let mut x = Vec::new();
        if self.free.gamma {
            let g = a.gamma.clamp(1e-9, 1.0 - 1e-9);
            x.push((g / (1.0 - g)).ln());
        }
        if self.free.sigma1 {
            x.push(a.sigma1.max(SIGMA_FLOOR).ln());
        }
        if self.free.sigma {
            x.push(a.sigma.max(SIGMA_FLOOR).ln());
        }
        if self.free.mu_e {
            x.push(a.mu_e);
        }
        x
    }

    fn decode(&self, x: &[f64]) -> AgentParams {
        let mut a = self.base;
        let mut it = x.iter().copied();
        if self.free.gamma {
            a.gamma = 1.0 / (1.0 + (-it.next().unwrap()).exp());
            // Keep strictly below one.
            a.gamma = a.gamma.min(1.0 - 1e-12);
        }
        if self.free.sigma1 {
            a.sigma1 = it.next().unwrap().exp();
        }
        if self.free.sigma {
            a.sigma = it.next().unwrap().exp();
        }
        if self.free.mu_e {
            a.mu_e = it.next().unwrap();
        }
        a
    }

    fn steps(&self) -> Vec<f64> {
        let mut s = Vec::new();
        if self.free.gamma {
            s.push(0.5);
        }
        if self.free.sigma1 {
            s.push(0.3);
        }
        if self.free.sigma {
            s.push(0.3);
        }
        if self.free.mu_e {
            s.push(0.25 * self.base.mu_e.abs().max(10.0));
        }
        s
    }
}

pub fn fit_agent(targets: &[CurveTarget], init: &AgentParams, free: FreeMask, opts: &FitOptions) -> Result<FitResult> {
    init.validate()?;
    let defined: usize = targets.iter().map(|t| t.h.iter().filter(|h| h.is_some()).count()).sum();
    if defined == 0 || defined < free.count() {
        return Err(Error::NoUsableData(format!(
            "{defined} defined hazard positions for {} free parameters",
            free.count()
        )));
    }
    if free.count() == 0 {
        return Ok(FitResult {
            params: *init,
            free,
            sse: sse(init, targets, opts.q)?,
            iterations: 0,
            evaluations: 1,
            restarts: 0,
            converged: true,
        });
    }
    let tr = Transform { base: *init, free };
    let x0 = tr.encode(init);
    let steps = tr.steps();
    let objective = |x: &[f64]| sse(&tr.decode(x), targets, opts.q).unwrap_or(f64::INFINITY);

    let starts: Vec<Vec<f64>> = {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut v = vec![x0.clone()];
        for _ in 1..opts.restarts.max(1) {
            v.push(
                x0.iter()
                    .zip(&steps)
                    .map(|(x, s)| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        x + 2.0 * s * z
                    })
                    .collect(),
            );
        }
        v
    };
    let mut simplex = Simplex::new(steps.clone());
    simplex.max_evals = opts.max_evals;
    simplex.f_tol = 1e-9;
    simplex.x_tol = 1e-4;
    let runs: Vec<_> = starts.par_iter().map(|s| simplex.minimize(objective, s)).collect();

    let best = runs.iter().min_by(|a, b| a.f.total_cmp(&b.f)).expect("at least one start");
    Ok(FitResult {
        params: tr.decode(&best.x),
        free,
        sse: best.f,
        iterations: runs.iter().map(|r| r.iterations).sum(),
        evaluations: runs.iter().map(|r| r.evals).sum(),
        restarts: runs.len(),
        converged: runs.iter().any(|r| r.converged),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Structure;

    fn synthetic(agent: &AgentParams) -> Vec<CurveTarget> {
        [4usize, 8]
            .iter()
            .map(|&tau| {
                let task = TaskParams::new(tau, 1.0, 1.5 * tau as f64).with_structure(Structure::IteratedProxy);
                let h = hazard_curve(&task, agent, 200).unwrap();
                CurveTarget {
                    task,
                    h: h.h.into_iter().map(Some).collect(),
                    weight: vec![1.0; tau],
                }
            })
            .collect()
    }

    #[test]
    fn mask_parsing() {
        let m: FreeMask = "gamma, mu_e".parse().unwrap();
        assert!(m.gamma && m.mu_e && !m.sigma && !m.sigma1);
        assert!("delta".parse::<FreeMask>().is_err());
    }

    #[test]
    fn empty_mask_echoes_init() {
        let truth = AgentParams::new(0.9, 0.6, 0.2, -0.1);
        let targets = synthetic(&truth);
        let init = AgentParams::new(0.8, 0.5, 0.3, 0.0);
        let r = fit_agent(&targets, &init, FreeMask::NONE, &FitOptions::default()).unwrap();
        assert_eq!(r.params, init);
        assert_eq!(r.sse, sse(&init, &targets, 200).unwrap());
    }

    #[test]
    fn recovers_discount_alone() {
        let truth = AgentParams::new(0.9, 0.6, 0.2, -0.1);
        let targets = synthetic(&truth);
        let init = AgentParams { gamma: 0.7, ..truth };
        let mask = FreeMask {
            gamma: true,
            ..FreeMask::NONE
        };
        let r = fit_agent(&targets, &init, mask, &FitOptions::default()).unwrap();
        assert!((r.params.gamma - 0.9).abs() < 1e-3, "{:?}", r.params);
        assert_eq!(r.params.sigma, truth.sigma);
    }

    #[test]
    fn transform_round_trips() {
        let a = AgentParams::new(0.95, 80.0, 20.0, -50.0);
        let tr = Transform {
            base: a,
            free: FreeMask::ALL,
        };
        let b = tr.decode(&tr.encode(&a));
        assert!((a.gamma - b.gamma).abs() < 1e-12 && (a.sigma1 - b.sigma1).abs() < 1e-9);
    }
}
