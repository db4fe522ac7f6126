//! Monte Carlo episodes of the thresholded bias walk.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{AgentParams, BiasModel, TaskParams};
use crate::solver::{solve, SolverKind};

/// Episodes are split into this many fixed shards, each with its own
/// stream, so results do not depend on the thread count.
pub const SHARDS: u64 = 64;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationResult {
    pub at_risk: Vec<u64>,
    pub defections: Vec<u64>,
    /// Defection step per episode, `tau + 1` when the episode completed.
    #[serde(skip)]
    pub outcomes: Vec<u16>,
}

impl SimulationResult {
    pub fn tau(&self) -> usize {
        self.at_risk.len()
    }

    pub fn episodes(&self) -> usize {
        self.outcomes.len()
    }

    /// Empirical hazard; `None` where nobody was at risk.
    pub fn hazard(&self) -> Vec<Option<f64>> {
        self.at_risk
            .iter()
            .zip(&self.defections)
            .map(|(&n, &d)| (n > 0).then(|| d as f64 / n as f64))
            .collect()
    }

    /// Binomial standard error of each hazard estimate.
    pub fn stderr(&self) -> Vec<Option<f64>> {
        self.hazard()
            .iter()
            .zip(&self.at_risk)
            .map(|(h, &n)| h.map(|h| (h * (1.0 - h) / n as f64).sqrt()))
            .collect()
    }
}

pub fn simulate_agent(task: &TaskParams, agent: &AgentParams, n: usize, seed: u64) -> Result<SimulationResult> {
    let sol = solve(SolverKind::default(), task, agent)?;
    simulate_thresholds(&sol.threshold_values(), agent, n, seed)
}

pub fn simulate_thresholds(thresholds: &[f64], agent: &AgentParams, n: usize, seed: u64) -> Result<SimulationResult> {
    if n == 0 {
        return Err(Error::InvalidParams("need at least one episode".into()));
    }
    let tau = thresholds.len();
    if tau == 0 || tau >= u16::MAX as usize {
        return Err(Error::InvalidParams(format!("unsupported tau {tau}")));
    }
    let shards: Vec<Vec<u16>> = (0..SHARDS)
        .into_par_iter()
        .map(|shard| {
            let begin = n as u64 * shard / SHARDS;
            let end = n as u64 * (shard + 1) / SHARDS;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(shard);
            (begin..end)
                .map(|_| run_episode(thresholds, agent, &mut rng) as u16)
                .collect()
        })
        .collect();
    let outcomes: Vec<u16> = shards.concat();

    let mut at_risk = vec![0u64; tau];
    let mut defections = vec![0u64; tau];
    for &d in &outcomes {
        let d = d as usize;
        for slot in &mut at_risk[..d.min(tau)] {
            *slot += 1;
        }
        if d <= tau {
            defections[d - 1] += 1;
        }
    }
    Ok(SimulationResult {
        at_risk,
        defections,
        outcomes,
    })
}

/// Defection step of one episode, `tau + 1` on completion.
pub(crate) fn run_episode<R: Rng>(thresholds: &[f64], agent: &AgentParams, rng: &mut R) -> usize {
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let mut w = agent.initial_sd() * normal();
    for (i, &th) in thresholds.iter().enumerate() {
        if i > 0 {
            w = match agent.bias {
                BiasModel::RandomWalk => w + agent.sigma * normal(),
                BiasModel::Iid => agent.sigma * normal(),
            };
        }
        if w < th {
            return i + 1;
        }
    }
    thresholds.len() + 1
}
