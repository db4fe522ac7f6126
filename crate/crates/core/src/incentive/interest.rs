//! Savings account with compounding interest and bonus withdrawals.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{prospect_weight, BonusSchedule, Optimized, Setting};
use crate::error::{Error, Result};
use crate::fitting::Simplex;
use crate::hazard::{hazard_from_thresholds, DefectionDistribution};
use crate::params::AgentParams;
use crate::problem::{persist_reward, Dgmdp};
use crate::solver::pla::solve_pla_problem;
use crate::solver::ValueSolution;

/// Bonus fraction the search starts from.
const INIT_FRACTION: f64 = 0.01;
/// Bonuses below this share of the bank are dropped if that does not hurt.
const NEGLIGIBLE_FRACTION: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LotterySpec {
    /// Win probability is `1 / alpha`.
    pub alpha: f64,
    /// Subjective overweighting of the prize relative to its expected value.
    pub weight: f64,
}

impl LotterySpec {
    pub fn certain() -> Self {
        Self { alpha: 1.0, weight: 1.0 }
    }

    pub fn new(alpha: f64) -> Result<Self> {
        Ok(Self {
            alpha,
            weight: prospect_weight(alpha)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 1.0) || !(self.weight >= 1.0) || !self.weight.is_finite() {
            return Err(Error::InvalidParams(format!(
                "lottery needs alpha >= 1 and weight >= 1, got {} and {}",
                self.alpha, self.weight
            )));
        }
        Ok(())
    }
}

impl Default for LotterySpec {
    fn default() -> Self {
        Self::certain()
    }
}

fn default_q() -> usize {
    200
}

fn default_search_q() -> usize {
    50
}

fn default_restarts() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterestScenario {
    /// Initial deposit.
    pub x: f64,
    /// Interest rate per step.
    pub r: f64,
    pub tau: usize,
    #[serde(default)]
    pub lottery: LotterySpec,
    /// Whether the agent values defecting at `b_t` plus the bonuses already
    /// paid, or at `b_t` alone. Paid bonuses were already counted as persist
    /// rewards, so adding them again counts them twice.
    #[serde(default)]
    pub defect_includes_collected: bool,
    /// Posterior quantiles used for reported values.
    #[serde(default = "default_q")]
    pub q: usize,
    /// Coarser posterior used inside the search.
    #[serde(default = "default_search_q")]
    pub search_q: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub seed: u64,
}

impl InterestScenario {
    pub fn new(x: f64, r: f64, tau: usize) -> Self {
        Self {
            x,
            r,
            tau,
            lottery: LotterySpec::certain(),
            defect_includes_collected: false,
            q: default_q(),
            search_q: default_search_q(),
            restarts: default_restarts(),
            seed: 0,
        }
    }

    pub fn with_lottery(mut self, lottery: LotterySpec) -> Self {
        self.lottery = lottery;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x > 0.0) || !(self.r >= 0.0) || !self.x.is_finite() || !self.r.is_finite() {
            return Err(Error::InvalidParams(format!(
                "need x > 0 and r >= 0, got {} and {}",
                self.x, self.r
            )));
        }
        if self.tau < 1 {
            return Err(Error::InvalidParams("tau must be at least 1".into()));
        }
        if self.q < 2 || self.search_q < 2 {
            return Err(Error::InvalidParams("q must be at least 2".into()));
        }
        self.lottery.validate()
    }

    /// Bank balances `b_1..b_tau` under `bonuses`.
    pub fn bank(&self, bonuses: &[f64]) -> Result<Vec<f64>> {
        if bonuses.len() + 1 != self.tau {
            return Err(Error::ScheduleMismatch {
                expected: self.tau - 1,
                got: bonuses.len(),
            });
        }
        let mut b = Vec::with_capacity(self.tau);
        b.push(self.x);
        for (t, &mu) in bonuses.iter().enumerate() {
            let bt = b[t];
            if !(mu >= 0.0) || mu > bt {
                return Err(Error::InfeasibleSchedule(format!(
                    "bonus {mu} at step {} exceeds bank {bt}",
                    t + 1
                )));
            }
            b.push((1.0 + self.r) * (bt - mu));
        }
        Ok(b)
    }

    /// Schedule paying `fractions[t - 1]` of the bank at step `t`.
    pub fn schedule_from_fractions(&self, fractions: &[f64]) -> BonusSchedule {
        let mut bank = self.x;
        let bonuses = fractions
            .iter()
            .map(|&f| {
                let mu = f.clamp(0.0, 1.0) * bank;
                bank = (1.0 + self.r) * (bank - mu);
                mu
            })
            .collect();
        BonusSchedule {
            setting: Setting::InterestAccrual,
            bonuses,
        }
    }

    /// The agent's choice problem. Bonuses enter at their subjective value.
    pub fn problem(&self, agent: &AgentParams, schedule: &BonusSchedule) -> Result<Dgmdp> {
        self.validate()?;
        let bank = self.bank(&schedule.bonuses)?;
        let mut collected = 0.0;
        let mut defect = Vec::with_capacity(self.tau);
        for t in 1..=self.tau {
            let extra = if self.defect_includes_collected { collected } else { 0.0 };
            defect.push(bank[t - 1] + extra);
            if t < self.tau {
                collected += schedule.bonuses[t - 1];
            }
        }
        let persist = schedule
            .bonuses
            .iter()
            .map(|&mu| persist_reward(self.lottery.weight * mu, agent.mu_e))
            .collect();
        let terminal = defect[self.tau - 1];
        Dgmdp::from_parts(defect, persist, terminal, agent)
    }

    fn distribution(&self, agent: &AgentParams, schedule: &BonusSchedule, q: usize) -> Result<DefectionDistribution> {
        let sol = solve_pla_problem(self.problem(agent, schedule)?);
        let h = hazard_from_thresholds(&sol.threshold_values(), agent, q)?;
        Ok(h.distribution())
    }
}

/// Payout when leaving at step `t` with bank `b` and `collected` bonuses.
fn accumulation(bank: &[f64], bonuses: &[f64], dist: &DefectionDistribution) -> f64 {
    let tau = bank.len();
    let mut collected = 0.0;
    let mut total = 0.0;
    for t in 1..=tau {
        let mut p = dist.p[t - 1];
        if t == tau {
            p += dist.completed;
        }
        total += p * (bank[t - 1] + collected);
        if t < tau {
            collected += bonuses[t - 1];
        }
    }
    total
}

/// Expected net accumulation: bank at departure plus bonuses paid out,
/// where reaching step `tau` means the account matured.
pub fn expected_accumulation(agent: &AgentParams, scenario: &InterestScenario, schedule: &BonusSchedule) -> Result<f64> {
    accumulation_with_q(agent, scenario, schedule, scenario.q)
}

pub(crate) fn accumulation_with_q(
    agent: &AgentParams,
    scenario: &InterestScenario,
    schedule: &BonusSchedule,
    q: usize,
) -> Result<f64> {
    let dist = scenario.distribution(agent, schedule, q)?;
    let bank = scenario.bank(&schedule.bonuses)?;
    Ok(accumulation(&bank, &schedule.bonuses, &dist))
}

fn logistic(p: f64) -> f64 {
    1.0 / (1.0 + (-p).exp())
}

fn logit(f: f64) -> f64 {
    (f / (1.0 - f)).ln()
}

/// Multi-start simplex search over `logit(mu_t / b_t)`.
pub fn optimize_interest_accrual(agent: &AgentParams, scenario: &InterestScenario) -> Result<Optimized> {
    scenario.validate()?;
    agent.validate()?;
    let n = scenario.tau - 1;
    let zero = BonusSchedule::zeros(Setting::InterestAccrual, scenario.tau);
    let baseline = expected_accumulation(agent, scenario, &zero)?;
    if n == 0 {
        return Ok(Optimized {
            schedule: zero,
            value: baseline,
            baseline,
        });
    }

    let objective = |p: &[f64]| {
        let fractions: Vec<f64> = p.iter().map(|&v| logistic(v)).collect();
        let s = scenario.schedule_from_fractions(&fractions);
        accumulation_with_q(agent, scenario, &s, scenario.search_q).map_or(f64::INFINITY, |v| -v)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut starts = vec![vec![logit(INIT_FRACTION); n]];
    for _ in 0..scenario.restarts {
        starts.push(
            (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    logit(INIT_FRACTION) + 2.0 * z
                })
                .collect(),
        );
    }
    // Differences below this are search noise.
    let tol = 1e-9 * scenario.x;
    let mut simplex = Simplex::new(vec![1.0; n]);
    simplex.max_evals = 200 * n;
    simplex.f_tol = tol;
    let best = starts
        .par_iter()
        .map(|x0| simplex.minimize(objective, x0))
        .min_by(|a, b| a.f.total_cmp(&b.f))
        .expect("at least one start");

    let fractions: Vec<f64> = best.x.iter().map(|&v| logistic(v)).collect();
    let mut schedule = scenario.schedule_from_fractions(&fractions);
    let mut value = expected_accumulation(agent, scenario, &schedule)?;

    let pruned: Vec<f64> = fractions
        .iter()
        .map(|&f| if f < NEGLIGIBLE_FRACTION { 0.0 } else { f })
        .collect();
    if pruned != fractions {
        let s = scenario.schedule_from_fractions(&pruned);
        let v = expected_accumulation(agent, scenario, &s)?;
        if v >= value - tol {
            schedule = s;
            value = v;
        }
    }
    if value <= baseline + tol {
        return Ok(Optimized {
            schedule: zero,
            value: baseline,
            baseline,
        });
    }
    Ok(Optimized {
        schedule,
        value,
        baseline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn saver(gamma: f64) -> AgentParams {
        AgentParams::new(gamma, 50.0, 30.0, 0.0)
    }

    #[test]
    fn bank_compounds() {
        let s = InterestScenario::new(100.0, 0.1, 3);
        let b = s.bank(&[10.0, 0.0]).unwrap();
        assert!((b[1] - 99.0).abs() < 1e-12);
        assert!((b[2] - 108.9).abs() < 1e-12);
    }

    #[test]
    fn overdraft_is_infeasible() {
        let s = InterestScenario::new(100.0, 0.1, 3);
        assert!(matches!(s.bank(&[101.0, 0.0]), Err(Error::InfeasibleSchedule(_))));
        assert!(matches!(s.bank(&[1.0]), Err(Error::ScheduleMismatch { .. })));
    }

    #[test]
    fn steadfast_saver_gets_full_compounding() {
        // Strongly negative bias never drops below the thresholds.
        let agent = AgentParams::new(0.999, 0.0, 0.0, 0.0);
        let s = InterestScenario::new(100.0, 0.1, 10);
        let zero = BonusSchedule::zeros(Setting::InterestAccrual, 10);
        let v = expected_accumulation(&agent, &s, &zero).unwrap();
        assert!((v - 100.0 * 1.1f64.powi(9)).abs() < 1e-9, "{v}");
    }

    #[test]
    fn impatient_saver_takes_deposit() {
        let agent = AgentParams::new(0.01, 0.0, 0.0, 0.0);
        let s = InterestScenario::new(100.0, 0.1, 10);
        let zero = BonusSchedule::zeros(Setting::InterestAccrual, 10);
        let v = expected_accumulation(&agent, &s, &zero).unwrap();
        assert!((v - 100.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn zero_schedule_ignores_lottery() {
        let agent = saver(0.55);
        let zero = BonusSchedule::zeros(Setting::InterestAccrual, 10);
        let a = expected_accumulation(&agent, &InterestScenario::new(100.0, 0.1, 10), &zero).unwrap();
        let s = InterestScenario::new(100.0, 0.1, 10).with_lottery(LotterySpec::new(1000.0).unwrap());
        let b = expected_accumulation(&agent, &s, &zero).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fractions_stay_within_bank() {
        let s = InterestScenario::new(100.0, 0.1, 5);
        let sched = s.schedule_from_fractions(&[1.0, 0.5, 0.2, 0.9]);
        let b = s.bank(&sched.bonuses).unwrap();
        assert!(b.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn single_step_has_nothing_to_optimize() {
        let out = optimize_interest_accrual(&saver(0.55), &InterestScenario::new(100.0, 0.1, 1)).unwrap();
        assert!(out.schedule.bonuses.is_empty());
        assert!((out.value - 100.0).abs() < 1e-9);
    }
}
