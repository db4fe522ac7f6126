//! Predicted behaviour of a solved agent: hazard curves, defection
//! distributions and expected reward rates.

pub(crate) mod simulate;

pub use simulate::{simulate_agent, simulate_thresholds, SimulationResult, SHARDS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::{cdf, midpoint_quantiles, quantile};
use crate::params::{AgentParams, BiasModel, Structure, TaskParams};
use crate::solver::{solve, SolverKind, ValueSolution};

/// Default posterior sample count.
pub const DEFAULT_Q: usize = 1000;

/// `h[t - 1] = P(D = t | D >= t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HazardCurve {
    pub h: Vec<f64>,
    /// First step at which no posterior mass survived; hazards from there
    /// on are 1 by convention.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exhausted_at: Option<usize>,
}

impl HazardCurve {
    pub fn new(h: Vec<f64>) -> Result<Self> {
        if h.is_empty() || h.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::InvalidParams("hazards must be in [0, 1]".into()));
        }
        Ok(Self { h, exhausted_at: None })
    }

    pub fn tau(&self) -> usize {
        self.h.len()
    }

    /// Probability of reaching the LL reward.
    pub fn survival(&self) -> f64 {
        self.h.iter().map(|h| 1.0 - h).product()
    }

    pub fn distribution(&self) -> DefectionDistribution {
        DefectionDistribution::from_hazard(&self.h)
    }
}

/// `p[t - 1] = P(D = t)` plus the mass that reaches LL.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectionDistribution {
    pub p: Vec<f64>,
    pub completed: f64,
}

impl DefectionDistribution {
    pub fn from_hazard(h: &[f64]) -> Self {
        let mut alive = 1.0;
        let p = h
            .iter()
            .map(|&ht| {
                let d = alive * ht;
                alive *= 1.0 - ht;
                d
            })
            .collect();
        Self { p, completed: alive }
    }

    pub fn tau(&self) -> usize {
        self.p.len()
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum::<f64>() + self.completed
    }

    /// Mean of `D`, counting completion as `tau + 1`.
    pub fn mean_step(&self) -> f64 {
        let tau = self.p.len();
        self.p.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum::<f64>() + (tau + 1) as f64 * self.completed
    }
}

/// Hazard curve for `(task, agent)` using the default solver.
pub fn hazard_curve(task: &TaskParams, agent: &AgentParams, q: usize) -> Result<HazardCurve> {
    let sol = solve(SolverKind::default(), task, agent)?;
    hazard_from_solution(sol.as_ref(), q)
}

pub fn hazard_from_solution(sol: &dyn ValueSolution, q: usize) -> Result<HazardCurve> {
    hazard_from_thresholds(&sol.threshold_values(), sol.problem().agent(), q)
}

/// Propagate equal-probability quantiles of the surviving bias through the
/// thresholds. The agent defects at `t` when `W_t < thresholds[t - 1]`.
pub fn hazard_from_thresholds(thresholds: &[f64], agent: &AgentParams, q: usize) -> Result<HazardCurve> {
    if q < 2 {
        return Err(Error::InvalidParams(format!("need q >= 2 quantiles, got {q}")));
    }
    if thresholds.is_empty() {
        return Err(Error::InvalidParams("no thresholds".into()));
    }
    Ok(match agent.bias {
        BiasModel::Iid => HazardCurve {
            h: thresholds.iter().map(|&th| mass_below(th, 0.0, agent.sigma)).collect(),
            exhausted_at: None,
        },
        BiasModel::RandomWalk => propagate_walk(thresholds, agent.sigma1, agent.sigma, q),
    })
}

/// `P(mean + sd Z < threshold)`.
fn mass_below(threshold: f64, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        if mean < threshold {
            1.0
        } else {
            0.0
        }
    } else {
        cdf((threshold - mean) / sd)
    }
}

fn propagate_walk(thresholds: &[f64], sigma1: f64, sigma: f64, q: usize) -> HazardCurve {
    let tau = thresholds.len();
    let mut h = Vec::with_capacity(tau);
    let h1 = mass_below(thresholds[0], 0.0, sigma1);
    h.push(h1);

    // Survivors of step 1: quantiles of the prior truncated below at the
    // threshold, taken from the upper tail so they stay exact when h1 ~ 1.
    let upper = if sigma1 == 0.0 {
        1.0 - h1
    } else {
        cdf(-thresholds[0] / sigma1)
    };
    let mut survivors: Vec<f64> = if h1 >= 1.0 || upper * 0.5 / q as f64 <= 0.0 {
        Vec::new()
    } else if sigma1 == 0.0 {
        vec![0.0; q]
    } else {
        (0..q)
            .map(|i| -sigma1 * quantile(upper * (q as f64 - i as f64 - 0.5) / q as f64))
            .collect()
    };
    let steps = midpoint_quantiles(q, sigma);
    let mut exhausted_at = None;
    let mut products = Vec::with_capacity(q * q);

    for &th in &thresholds[1..] {
        if survivors.is_empty() {
            exhausted_at.get_or_insert(h.len() + 1);
            h.push(1.0);
            continue;
        }
        // Hazard is the mixture mass below the threshold.
        let ht = survivors.iter().map(|&s| mass_below(th, s, sigma)).sum::<f64>() / survivors.len() as f64;
        h.push(ht);

        products.clear();
        if sigma == 0.0 {
            products.extend(survivors.iter().copied().filter(|&w| w >= th));
        } else {
            for &s in &survivors {
                products.extend(steps.iter().map(|&d| s + d).filter(|&w| w >= th));
            }
        }
        products.sort_unstable_by(f64::total_cmp);
        survivors = thin(&products, q);
    }
    HazardCurve { h, exhausted_at }
}

/// `q` equal-probability order statistics of a sorted sample.
fn thin(sorted: &[f64], q: usize) -> Vec<f64> {
    let n = sorted.len();
    if n == 0 {
        return Vec::new();
    }
    (0..q)
        .map(|k| sorted[(((k as f64 + 0.5) * n as f64) / q as f64) as usize])
        .collect()
}

/// Points per step for a given defection distribution, with bonuses taken
/// from `task.intermediate`.
///
/// Under the iterated proxy, defecting at `t` collects the bonuses before
/// `t` plus `mu_ss` for each of the remaining `tau - t + 1` steps, so every
/// outcome spans `tau` steps. In a one-shot task defecting at `t` ends the
/// task after `t` steps and the rate is expected points over expected steps.
pub fn reward_rate(task: &TaskParams, dist: &DefectionDistribution) -> Result<f64> {
    let tau = task.tau;
    if dist.tau() != tau {
        return Err(Error::ScheduleMismatch {
            expected: tau,
            got: dist.tau(),
        });
    }
    let mut collected = 0.0;
    let (mut points, mut steps) = (0.0, 0.0);
    for t in 1..=tau {
        let p = dist.p[t - 1];
        match task.structure {
            Structure::IteratedProxy => {
                points += p * (collected + (tau - t + 1) as f64 * task.mu_ss);
                steps += p * tau as f64;
            }
            Structure::OneShot => {
                points += p * (collected + task.mu_ss);
                steps += p * t as f64;
            }
        }
        if t < tau {
            collected += task.intermediate_at(t);
        }
    }
    points += dist.completed * (collected + task.mu_ll);
    steps += dist.completed * tau as f64;
    Ok(points / steps)
}

/// Expected points per step for an agent facing `task`, bonuses included.
pub fn expected_reward_rate(task: &TaskParams, agent: &AgentParams, q: usize) -> Result<f64> {
    let h = hazard_curve(task, agent, q)?;
    reward_rate(task, &h.distribution())
}
