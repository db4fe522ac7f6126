//! Hazard curves measured from played episodes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::game::protocol::BonusCondition;
use crate::game::session::EpisodeRecord;

/// Episodes from one participant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub episodes: Vec<EpisodeRecord>,
}

/// Which episodes to count.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeFilter {
    pub conditions: Option<Vec<BonusCondition>>,
    pub phases: Option<Vec<usize>>,
}

impl EpisodeFilter {
    pub fn condition(c: BonusCondition) -> Self {
        Self {
            conditions: Some(vec![c]),
            phases: None,
        }
    }

    pub fn accepts(&self, e: &EpisodeRecord) -> bool {
        self.conditions.as_ref().is_none_or(|c| c.contains(&e.condition))
            && self.phases.as_ref().is_none_or(|p| p.contains(&e.phase))
    }
}

/// Hazard at each position of one queue length and condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HazardCell {
    pub tau: usize,
    pub condition: BonusCondition,
    /// `None` where no subject had an episode reaching the position.
    pub h: Vec<Option<f64>>,
    /// Pooled counts across subjects.
    pub defections: Vec<u64>,
    pub at_risk: Vec<u64>,
    pub subjects: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalHazard {
    pub cells: Vec<HazardCell>,
}

impl EmpiricalHazard {
    pub fn cell(&self, tau: usize, condition: BonusCondition) -> Option<&HazardCell> {
        self.cells.iter().find(|c| c.tau == tau && c.condition == condition)
    }
}

/// Per subject and cell, the fraction of episodes ending at each step is
/// computed; fractions are averaged across subjects and converted to a
/// hazard.
pub fn empirical_hazard(subjects: &[Subject], filter: &EpisodeFilter) -> EmpiricalHazard {
    // (condition, tau) -> per-subject counts of defection steps.
    let mut per_cell: BTreeMap<(BonusCondition, usize), Vec<Vec<u64>>> = BTreeMap::new();
    for s in subjects {
        let mut mine: BTreeMap<(BonusCondition, usize), Vec<u64>> = BTreeMap::new();
        for e in s.episodes.iter().filter(|e| filter.accepts(e)) {
            let counts = mine.entry((e.condition, e.tau)).or_insert_with(|| vec![0; e.tau + 1]);
            counts[e.defection_step() - 1] += 1;
        }
        for (key, counts) in mine {
            per_cell.entry(key).or_default().push(counts);
        }
    }
    let cells = per_cell
        .into_iter()
        .map(|((condition, tau), subjects)| cell_from_counts(tau, condition, &subjects))
        .collect();
    EmpiricalHazard { cells }
}

fn cell_from_counts(tau: usize, condition: BonusCondition, subjects: &[Vec<u64>]) -> HazardCell {
    let k = subjects.len() as f64;
    let mut mean = vec![0.0; tau];
    let mut defections = vec![0u64; tau];
    let mut at_risk = vec![0u64; tau];
    for counts in subjects {
        let n: u64 = counts.iter().sum();
        let mut alive = n;
        for t in 0..tau {
            mean[t] += counts[t] as f64 / n as f64 / k;
            defections[t] += counts[t];
            at_risk[t] += alive;
            alive -= counts[t];
        }
    }
    let mut gone = 0.0;
    let h = mean
        .iter()
        .map(|&p| {
            let left = 1.0 - gone;
            gone += p;
            (left > 1e-12).then(|| (p / left).clamp(0.0, 1.0))
        })
        .collect();
    HazardCell {
        tau,
        condition,
        h,
        defections,
        at_risk,
        subjects: subjects.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::session::Outcome;

    fn episode(tau: usize, outcome: Outcome) -> EpisodeRecord {
        EpisodeRecord {
            tau,
            condition: BonusCondition::None,
            phase: 0,
            outcome,
            points: 0.0,
            bonuses: 0.0,
            start_tick: 0,
            end_tick: 0,
            start_ms: 0,
            end_ms: 0,
        }
    }

    fn subject(id: &str, episodes: Vec<EpisodeRecord>) -> Subject {
        Subject { id: id.into(), episodes }
    }

    #[test]
    fn single_defection_at_three() {
        let s = subject("a", vec![episode(6, Outcome::Defected { step: 3 })]);
        let h = empirical_hazard(&[s], &EpisodeFilter::default());
        let c = h.cell(6, BonusCondition::None).unwrap();
        assert_eq!(&c.h[..3], &[Some(0.0), Some(0.0), Some(1.0)]);
        assert_eq!(&c.h[3..], &[None, None, None]);
    }

    #[test]
    fn half_defect_first() {
        let s = subject(
            "a",
            vec![episode(4, Outcome::Defected { step: 1 }), episode(4, Outcome::Completed)],
        );
        let h = empirical_hazard(&[s], &EpisodeFilter::default());
        let c = h.cell(4, BonusCondition::None).unwrap();
        assert_eq!(c.h, vec![Some(0.5), Some(0.0), Some(0.0), Some(0.0)]);
        assert_eq!(c.at_risk, vec![2, 1, 1, 1]);
    }

    #[test]
    fn subjects_weigh_equally() {
        // One subject always defects at 1 (two episodes), the other never (one episode).
        let a = subject(
            "a",
            vec![
                episode(4, Outcome::Defected { step: 1 }),
                episode(4, Outcome::Defected { step: 1 }),
            ],
        );
        let b = subject("b", vec![episode(4, Outcome::Completed)]);
        let h = empirical_hazard(&[a, b], &EpisodeFilter::default());
        assert_eq!(h.cells[0].h[0], Some(0.5));
        assert_eq!(h.cells[0].h[1], Some(0.0));
    }
}
