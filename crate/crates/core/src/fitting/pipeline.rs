//! Per-experiment analyses over a game log.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::analysis::{median_split, predict_and_correlate, predicted_rate, CorrelationReport, Split};
use super::empirical::{empirical_hazard, EmpiricalHazard, EpisodeFilter, Subject};
use super::fit::{fit_agent, targets_from_empirical, FitOptions, FitResult, FreeMask};
use crate::error::{Error, Result};
use crate::game::event::GameEvent;
use crate::game::protocol::{BonusCondition, ExperimentProtocol, ProtocolId};
use crate::game::summary::{reward_rate, subjects_from_log};
use crate::hazard::hazard_curve;
use crate::params::AgentParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOptions {
    /// Starting point, and the value of every frozen parameter.
    pub init: AgentParams,
    /// Defaults per protocol when absent.
    pub free: Option<FreeMask>,
    pub fit: FitOptions,
    pub shuffles: usize,
    pub weight_by_at_risk: bool,
    /// Posterior quantiles for reported predictions.
    pub q: usize,
}

impl AnalyzeOptions {
    pub fn new(init: AgentParams) -> Self {
        Self {
            init,
            free: None,
            fit: FitOptions::default(),
            shuffles: super::analysis::DEFAULT_SHUFFLES,
            weight_by_at_risk: false,
            q: crate::hazard::DEFAULT_Q,
        }
    }
}

/// Parameters each experiment refits.
pub fn default_free(id: ProtocolId) -> FreeMask {
    match id {
        ProtocolId::Exp1 => FreeMask::ALL,
        ProtocolId::Exp2 => FreeMask {
            mu_e: true,
            ..FreeMask::NONE
        },
        ProtocolId::Exp3 => FreeMask::NONE,
        ProtocolId::Exp4 | ProtocolId::Exp5 => FreeMask {
            gamma: true,
            ..FreeMask::NONE
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedCell {
    pub tau: usize,
    pub condition: BonusCondition,
    pub h: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionRate {
    pub condition: BonusCondition,
    /// Mean over subjects of points per action; `None` without episodes.
    pub observed: Option<f64>,
    pub predicted: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub name: String,
    pub subjects: Vec<String>,
    pub fit: FitResult,
    pub rates: Vec<ConditionRate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndividualFit {
    pub subject: String,
    pub fit: FitResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalysisReport {
    Population {
        protocol: ProtocolId,
        subjects: usize,
        empirical: EmpiricalHazard,
        fit: FitResult,
        predicted: Vec<PredictedCell>,
        rates: Vec<ConditionRate>,
    },
    Groups {
        protocol: ProtocolId,
        split: Split,
        groups: Vec<GroupReport>,
    },
    Individuals {
        protocol: ProtocolId,
        fits: Vec<IndividualFit>,
        correlations: Vec<CorrelationReport>,
    },
}

/// Subject restricted to episodes passing `filter`.
fn filtered(s: &Subject, filter: &EpisodeFilter) -> Subject {
    Subject {
        id: s.id.clone(),
        episodes: s.episodes.iter().filter(|e| filter.accepts(e)).cloned().collect(),
    }
}

fn conditions(protocol: &ExperimentProtocol) -> Vec<BonusCondition> {
    let mut out: Vec<BonusCondition> = protocol.phases.iter().flat_map(|p| p.conditions.iter().copied()).collect();
    out.sort();
    out.dedup();
    out
}

fn fit_subjects(subjects: &[Subject], protocol: &ExperimentProtocol, free: FreeMask, opts: &AnalyzeOptions) -> Result<FitResult> {
    let emp = empirical_hazard(subjects, &EpisodeFilter::default());
    let targets = targets_from_empirical(&emp, protocol, opts.weight_by_at_risk);
    fit_agent(&targets, &opts.init, free, &opts.fit)
}

fn mean_rate(subjects: &[Subject], condition: BonusCondition) -> Option<f64> {
    let rates: Vec<f64> = subjects
        .iter()
        .filter_map(|s| reward_rate(&filtered(s, &EpisodeFilter::condition(condition)).episodes))
        .collect();
    (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64)
}

fn condition_rates(
    subjects: &[Subject],
    protocol: &ExperimentProtocol,
    agent: &AgentParams,
    q: usize,
) -> Result<Vec<ConditionRate>> {
    conditions(protocol)
        .into_iter()
        .map(|c| {
            Ok(ConditionRate {
                condition: c,
                observed: mean_rate(subjects, c),
                predicted: predicted_rate(agent, protocol, c, q)?,
            })
        })
        .collect()
}

/// Run the analysis matching the protocol: a population fit for
/// EXP1-EXP3, a median split with per-group fits for EXP4, and individual
/// fits on the first phase predicting the second for EXP5.
pub fn analyze(protocol: &ExperimentProtocol, events: &[GameEvent], opts: &AnalyzeOptions) -> Result<AnalysisReport> {
    let subjects = subjects_from_log(protocol, events);
    if subjects.iter().all(|s| s.episodes.is_empty()) {
        return Err(Error::NoUsableData("log has no usable episodes".into()));
    }
    let free = opts.free.unwrap_or_else(|| default_free(protocol.id));
    match protocol.id {
        ProtocolId::Exp1 | ProtocolId::Exp2 | ProtocolId::Exp3 => {
            let empirical = empirical_hazard(&subjects, &EpisodeFilter::default());
            let fit = fit_subjects(&subjects, protocol, free, opts)?;
            let predicted = empirical
                .cells
                .iter()
                .map(|c| {
                    Ok(PredictedCell {
                        tau: c.tau,
                        condition: c.condition,
                        h: hazard_curve(&protocol.task(c.condition, c.tau), &fit.params, opts.q)?.h,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let rates = condition_rates(&subjects, protocol, &fit.params, opts.q)?;
            Ok(AnalysisReport::Population {
                protocol: protocol.id,
                subjects: subjects.len(),
                empirical,
                fit,
                predicted,
                rates,
            })
        }
        ProtocolId::Exp4 => {
            let baseline = EpisodeFilter::condition(BonusCondition::None);
            let (kept, rates): (Vec<&Subject>, Vec<f64>) = subjects
                .iter()
                .filter_map(|s| reward_rate(&filtered(s, &baseline).episodes).map(|r| (s, r)))
                .unzip();
            let split = median_split(&rates)?;
            let mut groups = Vec::new();
            for (name, idx) in [("weak", &split.weak), ("strong", &split.strong)] {
                let members: Vec<Subject> = idx.iter().map(|&i| kept[i].clone()).collect();
                let fit = fit_subjects(&members, protocol, free, opts)?;
                let rates = condition_rates(&members, protocol, &fit.params, opts.q)?;
                groups.push(GroupReport {
                    name: name.into(),
                    subjects: members.iter().map(|s| s.id.clone()).collect(),
                    fit,
                    rates,
                });
            }
            Ok(AnalysisReport::Groups {
                protocol: protocol.id,
                split,
                groups,
            })
        }
        ProtocolId::Exp5 => {
            let first = EpisodeFilter {
                conditions: None,
                phases: Some(vec![0]),
            };
            let usable: Vec<&Subject> = subjects
                .iter()
                .filter(|s| {
                    s.episodes.iter().any(|e| e.phase == 0)
                        && [BonusCondition::Early, BonusCondition::Late]
                            .iter()
                            .all(|&c| s.episodes.iter().any(|e| e.phase > 0 && e.condition == c))
                })
                .collect();
            let fits = usable
                .par_iter()
                .map(|s| {
                    let fit = fit_subjects(&[filtered(s, &first)], protocol, free, opts)?;
                    Ok(IndividualFit {
                        subject: s.id.clone(),
                        fit,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let observed: Vec<(BonusCondition, Vec<f64>)> = [BonusCondition::Early, BonusCondition::Late]
                .iter()
                .map(|&c| {
                    let filter = EpisodeFilter {
                        conditions: Some(vec![c]),
                        phases: Some((1..protocol.phases.len()).collect()),
                    };
                    let rates = usable
                        .iter()
                        .map(|s| reward_rate(&filtered(s, &filter).episodes).unwrap_or(f64::NAN))
                        .collect();
                    (c, rates)
                })
                .collect();
            let params: Vec<AgentParams> = fits.iter().map(|f| f.fit.params).collect();
            let correlations = predict_and_correlate(&params, protocol, &observed, opts.shuffles, opts.fit.seed, opts.q)?;
            Ok(AnalysisReport::Individuals {
                protocol: protocol.id,
                fits,
                correlations,
            })
        }
    }
}
