//! Placement of a few fixed-size bonuses, paid for out of the LL reward.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BonusSchedule, Optimized, Setting};
use crate::error::{Error, Result};
use crate::hazard::expected_reward_rate;
use crate::params::{AgentParams, Structure, TaskParams};

fn default_q() -> usize {
    200
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BonusLimitScenario {
    /// Maximum number of bonus units.
    pub n_b: usize,
    pub unit: f64,
    pub mu_ss: f64,
    /// Reward-rate ratio of full persistence over always defecting.
    pub rho: f64,
    #[serde(default = "default_q")]
    pub q: usize,
}

impl BonusLimitScenario {
    pub fn new(n_b: usize, unit: f64, mu_ss: f64, rho: f64) -> Self {
        Self {
            n_b,
            unit,
            mu_ss,
            rho,
            q: default_q(),
        }
    }

    /// LL reward after paying for the bonuses in `schedule`.
    pub fn mu_ll(&self, tau: usize, schedule: &BonusSchedule) -> f64 {
        self.rho * tau as f64 * self.mu_ss - schedule.total()
    }

    pub fn task(&self, tau: usize, schedule: &BonusSchedule) -> TaskParams {
        TaskParams::new(tau, self.mu_ss, self.mu_ll(tau, schedule))
            .with_structure(Structure::IteratedProxy)
            .with_intermediate(schedule.bonuses.clone())
    }

    fn check(&self, tau: usize) -> Result<()> {
        if tau < 2 {
            return Err(Error::InvalidParams("bonus placement needs tau >= 2".into()));
        }
        if !(self.unit > 0.0) || !(self.mu_ss > 0.0) || !self.rho.is_finite() {
            return Err(Error::InvalidParams("need unit > 0, mu_ss > 0 and finite rho".into()));
        }
        if self.n_b as f64 * self.unit > self.rho * tau as f64 * self.mu_ss - self.mu_ss {
            return Err(Error::InvalidParams(format!(
                "{} bonuses of {} would leave the LL reward below mu_ss",
                self.n_b, self.unit
            )));
        }
        Ok(())
    }
}

/// Why a schedule is not admissible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// Defecting at `step` would beat the SS reward rate.
    Exploitable {
        step: usize,
        rate: f64,
    },
    TooManyUnits {
        units: usize,
        limit: usize,
    },
    NotUnitMultiple {
        step: usize,
        bonus: f64,
    },
    WrongLength {
        expected: usize,
        got: usize,
    },
}

/// Check that no defection step earns more than `mu_ss` per step and that
/// the schedule is made of at most `n_b` whole units.
pub fn validate_schedule(
    schedule: &BonusSchedule,
    scenario: &BonusLimitScenario,
    tau: usize,
) -> std::result::Result<(), Violation> {
    if schedule.bonuses.len() + 1 != tau {
        return Err(Violation::WrongLength {
            expected: tau.saturating_sub(1),
            got: schedule.bonuses.len(),
        });
    }
    let mut units = 0;
    for (i, &b) in schedule.bonuses.iter().enumerate() {
        let k = (b / scenario.unit).round();
        if b < 0.0 || (k * scenario.unit - b).abs() > 1e-9 * scenario.unit.max(1.0) {
            return Err(Violation::NotUnitMultiple { step: i + 1, bonus: b });
        }
        units += k as usize;
    }
    if units > scenario.n_b {
        return Err(Violation::TooManyUnits {
            units,
            limit: scenario.n_b,
        });
    }
    let mut collected = 0.0;
    for t in 1..=tau {
        let rate = (collected + (tau - t + 1) as f64 * scenario.mu_ss) / tau as f64;
        if rate > scenario.mu_ss * (1.0 + 1e-12) {
            return Err(Violation::Exploitable { step: t, rate });
        }
        if t < tau {
            collected += schedule.bonuses[t - 1];
        }
    }
    Ok(())
}

/// Number of multisets of size at most `k` drawn from `n` positions.
pub fn multiset_count(n: usize, k: usize) -> u64 {
    // sum_{j<=k} C(n+j-1, j) = C(n+k, k)
    let mut c: u64 = 1;
    for i in 1..=k as u64 {
        c = c * (n as u64 + i) / i;
    }
    c
}

/// Every placement of up to `n_b` units over steps `1..tau-1`, as sorted
/// position lists, fewest bonuses first then lexicographic.
pub fn enumerate_schedules(tau: usize, n_b: usize) -> Vec<Vec<usize>> {
    let n = tau.saturating_sub(1);
    let mut out = vec![Vec::new()];
    if n == 0 {
        return out;
    }
    let mut level = vec![Vec::new()];
    for _ in 0..n_b {
        let mut next = Vec::new();
        for prefix in &level {
            let start = prefix.last().copied().unwrap_or(1);
            for pos in start..=n {
                let mut p: Vec<usize> = prefix.clone();
                p.push(pos);
                next.push(p);
            }
        }
        out.extend(next.iter().cloned());
        level = next;
    }
    out
}

fn to_schedule(positions: &[usize], tau: usize, unit: f64) -> BonusSchedule {
    let mut s = BonusSchedule::zeros(Setting::BonusLimit, tau);
    for &p in positions {
        s.bonuses[p - 1] += unit;
    }
    s
}

/// Brute-force search for the placement with the highest predicted reward rate.
pub fn optimize_bonus_limit(agent: &AgentParams, scenario: &BonusLimitScenario, tau: usize) -> Result<Optimized> {
    scenario.check(tau)?;
    agent.validate()?;
    let candidates: Vec<BonusSchedule> = enumerate_schedules(tau, scenario.n_b)
        .iter()
        .map(|p| to_schedule(p, tau, scenario.unit))
        .filter(|s| validate_schedule(s, scenario, tau).is_ok())
        .collect();
    let rates = candidates
        .par_iter()
        .map(|s| expected_reward_rate(&scenario.task(tau, s), agent, scenario.q))
        .collect::<Result<Vec<f64>>>()?;
    let baseline = rates[0];
    // Candidates are already in tie-break order, so keep the first maximum.
    let mut best = 0;
    for (i, &r) in rates.iter().enumerate() {
        if r > rates[best] + 1e-12 * rates[best].abs().max(1.0) {
            best = i;
        }
    }
    Ok(Optimized {
        schedule: candidates[best].clone(),
        value: rates[best],
        baseline,
    })
}
