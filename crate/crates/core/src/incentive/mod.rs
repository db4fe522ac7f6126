//! Bonus schedules that steer a biased agent toward persisting.

pub mod bonus_limit;
pub mod interest;

pub use bonus_limit::{
    enumerate_schedules, multiset_count, optimize_bonus_limit, validate_schedule, BonusLimitScenario, Violation,
};
pub use interest::{expected_accumulation, optimize_interest_accrual, InterestScenario, LotterySpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Median probability-weighting curvature for gains.
pub const CPT_DELTA: f64 = 0.61;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Setting {
    InterestAccrual,
    BonusLimit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BonusSchedule {
    pub setting: Setting,
    /// Bonus for persisting through step `t`, `t = 1..tau - 1`.
    pub bonuses: Vec<f64>,
}

impl BonusSchedule {
    pub fn zeros(setting: Setting, tau: usize) -> Self {
        Self {
            setting,
            bonuses: vec![0.0; tau.saturating_sub(1)],
        }
    }

    pub fn total(&self) -> f64 {
        self.bonuses.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bonuses.iter().all(|&b| b == 0.0)
    }
}

/// Result of a schedule search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimized {
    pub schedule: BonusSchedule,
    pub value: f64,
    /// Value of the schedule without bonuses.
    pub baseline: f64,
}

/// Cumulative-prospect-theory decision weight `w(p)`.
pub fn cpt_weight(p: f64, delta: f64) -> f64 {
    let a = p.powf(delta);
    a / (a + (1.0 - p).powf(delta)).powf(1.0 / delta)
}

/// Overweighting factor `w(p) / p` of a lottery won with probability `1 / alpha`.
pub fn prospect_weight(alpha: f64) -> Result<f64> {
    prospect_weight_with(alpha, CPT_DELTA)
}

pub fn prospect_weight_with(alpha: f64, delta: f64) -> Result<f64> {
    if !(alpha >= 1.0) || !(delta > 0.0) {
        return Err(Error::InvalidParams(format!(
            "need alpha >= 1 and delta > 0, got {alpha}, {delta}"
        )));
    }
    if alpha == 1.0 {
        return Ok(1.0);
    }
    let p = 1.0 / alpha;
    Ok(cpt_weight(p, delta) / p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn certain_lottery_is_unweighted() {
        assert_eq!(prospect_weight(1.0).unwrap(), 1.0);
    }

    #[test]
    fn identity_weighting() {
        for alpha in [2.0, 10.0, 1000.0] {
            assert!((prospect_weight_with(alpha, 1.0).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_short_odds() {
        assert!(prospect_weight(0.5).is_err());
        assert!(prospect_weight(f64::NAN).is_err());
    }

    #[test]
    fn weight_matches_direct_formula() {
        let p: f64 = 0.1;
        let d = 0.61;
        let direct = p.powf(d) / (p.powf(d) + 0.9f64.powf(d)).powf(1.0 / d) / p;
        assert!((prospect_weight(10.0).unwrap() - direct).abs() < 1e-14);
    }
}
