//! Experiment configurations for the queue-waiting game.
//!
//! Positions are numbered like model steps: the vestibule is step 1, the
//! long queue holds steps `2..=tau`, and advancing from the front (step
//! `tau`) serves the LL reward. A bonus listed for step `t` is paid when the
//! player persists through step `t`.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Structure, TaskParams};

pub const SS_POINTS: f64 = 100.0;
pub const BONUS_UNIT: f64 = 50.0;
/// Bonus units in the early and late schedules.
pub const BONUS_UNITS: usize = 4;
pub const IDLE_WARN_MS: u64 = 7_000;
pub const IDLE_REJECT_MS: u64 = 14_000;
/// Play trimmed from each end of a phase before analysis.
pub const TRIM_MS: u64 = 30_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ProtocolId {
    Exp1,
    Exp2,
    Exp3,
    Exp4,
    Exp5,
}

impl ProtocolId {
    pub const ALL: [ProtocolId; 5] = [
        ProtocolId::Exp1,
        ProtocolId::Exp2,
        ProtocolId::Exp3,
        ProtocolId::Exp4,
        ProtocolId::Exp5,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolId::Exp1 => "EXP1",
            ProtocolId::Exp2 => "EXP2",
            ProtocolId::Exp3 => "EXP3",
            ProtocolId::Exp4 => "EXP4",
            ProtocolId::Exp5 => "EXP5",
        }
    }
}

impl FromStr for ProtocolId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProtocolId::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownProtocol(s.to_string()))
    }
}

impl std::fmt::Display for ProtocolId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BonusCondition {
    None,
    /// Fixed small bonuses of mixed size.
    Mixed,
    Early,
    Late,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub name: String,
    /// `None` means the phase lasts for the rest of the session.
    pub duration_s: Option<u64>,
    /// Conditions cycled through episode by episode.
    pub conditions: Vec<BonusCondition>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionSchedule {
    pub condition: BonusCondition,
    pub tau: usize,
    /// Bonus paid for persisting through step `t`, `t = 1..tau - 1`.
    pub bonuses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentProtocol {
    pub id: ProtocolId,
    pub rho: f64,
    pub tick_ms: u64,
    pub queue_lengths: Vec<usize>,
    pub keystrokes_per_advance: u32,
    pub phases: Vec<Phase>,
    pub schedules: Vec<ConditionSchedule>,
}

impl ExperimentProtocol {
    /// Built-in protocol. `rho` selects the EXP1 arm and is ignored elsewhere.
    pub fn builtin(id: ProtocolId, rho: Option<f64>) -> Result<Self> {
        let single = |conditions: Vec<BonusCondition>| {
            vec![Phase {
                name: "main".into(),
                duration_s: None,
                conditions,
            }]
        };
        let six = vec![4, 6, 8, 10, 12, 14];
        let three = vec![6, 10, 14];
        let proto = match id {
            ProtocolId::Exp1 => {
                let rho = rho.unwrap_or(1.5);
                if rho != 1.25 && rho != 1.5 {
                    return Err(Error::InvalidParams(format!("EXP1 arms are rho 1.25 and 1.5, got {rho}")));
                }
                Self {
                    id,
                    rho,
                    tick_ms: 2000,
                    queue_lengths: six,
                    keystrokes_per_advance: 1,
                    phases: single(vec![BonusCondition::None]),
                    schedules: Vec::new(),
                }
            }
            ProtocolId::Exp2 => Self {
                id,
                rho: 1.5,
                tick_ms: 1000,
                queue_lengths: six,
                keystrokes_per_advance: 2,
                phases: single(vec![BonusCondition::None]),
                schedules: Vec::new(),
            },
            ProtocolId::Exp3 => Self {
                id,
                rho: 1.5,
                tick_ms: 1000,
                schedules: six
                    .iter()
                    .map(|&tau| ConditionSchedule {
                        condition: BonusCondition::Mixed,
                        tau,
                        bonuses: mixed_schedule(tau),
                    })
                    .collect(),
                queue_lengths: six,
                keystrokes_per_advance: 2,
                phases: single(vec![BonusCondition::Mixed]),
            },
            ProtocolId::Exp4 => Self {
                id,
                rho: 1.5,
                tick_ms: 1000,
                schedules: early_late_schedules(&three),
                queue_lengths: three,
                keystrokes_per_advance: 2,
                phases: single(vec![BonusCondition::None, BonusCondition::Early, BonusCondition::Late]),
            },
            ProtocolId::Exp5 => Self {
                id,
                rho: 1.5,
                tick_ms: 1000,
                schedules: early_late_schedules(&three),
                queue_lengths: three,
                keystrokes_per_advance: 2,
                phases: vec![
                    Phase {
                        name: "no_bonus".into(),
                        duration_s: Some(240),
                        conditions: vec![BonusCondition::None],
                    },
                    Phase {
                        name: "bonus".into(),
                        duration_s: Some(420),
                        conditions: vec![BonusCondition::Early, BonusCondition::Late],
                    },
                ],
            },
        };
        Ok(proto)
    }

    /// Bonuses for `(condition, tau)`; all zero when none are scheduled.
    pub fn bonuses(&self, condition: BonusCondition, tau: usize) -> Vec<f64> {
        self.schedules
            .iter()
            .find(|s| s.condition == condition && s.tau == tau)
            .map(|s| s.bonuses.clone())
            .unwrap_or_else(|| vec![0.0; tau.saturating_sub(1)])
    }

    /// LL reward: `100 tau rho` less whatever the schedule pays on the way.
    pub fn ll_points(&self, condition: BonusCondition, tau: usize) -> f64 {
        SS_POINTS * tau as f64 * self.rho - self.bonuses(condition, tau).iter().sum::<f64>()
    }

    /// The model task an episode of this protocol corresponds to.
    pub fn task(&self, condition: BonusCondition, tau: usize) -> TaskParams {
        TaskParams::new(tau, SS_POINTS, self.ll_points(condition, tau))
            .with_structure(Structure::IteratedProxy)
            .with_intermediate(self.bonuses(condition, tau))
    }

    /// Replace the early/late schedule for one queue length.
    pub fn set_schedule(&mut self, condition: BonusCondition, tau: usize, bonuses: Vec<f64>) -> Result<()> {
        if !self.queue_lengths.contains(&tau) || bonuses.len() + 1 != tau {
            return Err(Error::ScheduleMismatch {
                expected: tau.saturating_sub(1),
                got: bonuses.len(),
            });
        }
        self.schedules.retain(|s| !(s.condition == condition && s.tau == tau));
        self.schedules.push(ConditionSchedule { condition, tau, bonuses });
        self.schedules.sort_by_key(|s| (s.condition, s.tau));
        Ok(())
    }

    /// Phase index active `elapsed_ms` after the session started.
    pub fn phase_at(&self, elapsed_ms: u64) -> usize {
        let mut end = 0u64;
        for (i, phase) in self.phases.iter().enumerate() {
            match phase.duration_s {
                None => return i,
                Some(d) => {
                    end += d * 1000;
                    if elapsed_ms < end {
                        return i;
                    }
                }
            }
        }
        self.phases.len() - 1
    }
}

/// A 50 and a 75 point bonus at roughly one and two thirds of the queue.
fn mixed_schedule(tau: usize) -> Vec<f64> {
    let mut b = vec![0.0; tau - 1];
    b[(tau / 3).max(1) - 1] += 50.0;
    b[(2 * tau / 3).max(2) - 1] += 75.0;
    b
}

/// Four 50-point units spread over the first or second half of the queue.
fn early_late_schedules(lengths: &[usize]) -> Vec<ConditionSchedule> {
    let mut out = Vec::new();
    for &tau in lengths {
        let half = tau / 2;
        let mut early = vec![0.0; tau - 1];
        for k in 0..BONUS_UNITS {
            early[k % half] += BONUS_UNIT;
        }
        let late_first = tau.div_ceil(2);
        let late_span = tau - late_first;
        let mut late = vec![0.0; tau - 1];
        for k in 0..BONUS_UNITS {
            late[tau - 2 - k % late_span] += BONUS_UNIT;
        }
        out.push(ConditionSchedule {
            condition: BonusCondition::Early,
            tau,
            bonuses: early,
        });
        out.push(ConditionSchedule {
            condition: BonusCondition::Late,
            tau,
            bonuses: late,
        });
    }
    out.sort_by_key(|s| (s.condition, s.tau));
    out
}
