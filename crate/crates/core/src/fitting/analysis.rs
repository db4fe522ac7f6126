//! Group splits and individual prediction analyses.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::protocol::{BonusCondition, ExperimentProtocol};
use crate::hazard::hazard_curve;
use crate::params::AgentParams;

pub const DEFAULT_SHUFFLES: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub median: f64,
    /// Indices into the input, in input order.
    pub weak: Vec<usize>,
    pub strong: Vec<usize>,
}

/// Subjects at or above the median rate are strong.
pub fn median_split(rates: &[f64]) -> Result<Split> {
    if rates.len() < 2 {
        return Err(Error::TooFewSubjects {
            needed: 2,
            got: rates.len(),
        });
    }
    let mut sorted = rates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let (strong, weak): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| rates[i] >= median);
    Ok(Split { median, weak, strong })
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Model points per action in one condition, queue lengths equally likely.
///
/// Ending at step `t` takes `t` actions and pays `mu_ss` plus the bonuses
/// collected; completing takes `tau` actions and pays LL plus all bonuses.
pub fn predicted_rate(agent: &AgentParams, protocol: &ExperimentProtocol, condition: BonusCondition, q: usize) -> Result<f64> {
    let (mut points, mut actions) = (0.0, 0.0);
    for &tau in &protocol.queue_lengths {
        let task = protocol.task(condition, tau);
        let dist = hazard_curve(&task, agent, q)?.distribution();
        let mut collected = 0.0;
        for t in 1..=tau {
            points += dist.p[t - 1] * (collected + task.mu_ss);
            actions += dist.p[t - 1] * t as f64;
            if t < tau {
                collected += task.intermediate_at(t);
            }
        }
        points += dist.completed * (collected + task.mu_ll);
        actions += dist.completed * tau as f64;
    }
    Ok(points / actions)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub label: String,
    /// `None` when either side has no variance.
    pub r: Option<f64>,
    pub shuffles: usize,
    /// 99th percentile of the shuffled correlations.
    pub null_p99: Option<f64>,
    /// Fraction of shuffles whose correlation reached `r`.
    pub p_value: Option<f64>,
}

impl CorrelationReport {
    /// Correlation of matched pairs against correlations after randomly
    /// reassigning predictions to subjects.
    pub fn compute(label: &str, predicted: &[f64], observed: &[f64], shuffles: usize, seed: u64) -> Result<Self> {
        if predicted.len() < 3 || predicted.len() != observed.len() {
            return Err(Error::TooFewSubjects {
                needed: 3,
                got: predicted.len().min(observed.len()),
            });
        }
        let r = pearson(predicted, observed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm = predicted.to_vec();
        let mut null: Vec<f64> = (0..shuffles)
            .filter_map(|_| {
                perm.shuffle(&mut rng);
                pearson(&perm, observed)
            })
            .collect();
        null.sort_by(f64::total_cmp);
        let null_p99 = (!null.is_empty()).then(|| null[((null.len() as f64 * 0.99).ceil() as usize).min(null.len()) - 1]);
        let p_value = r
            .filter(|_| !null.is_empty())
            .map(|r| null.iter().filter(|&&x| x >= r).count() as f64 / null.len() as f64);
        Ok(Self {
            label: label.to_string(),
            r,
            shuffles,
            null_p99,
            p_value,
        })
    }
}

/// Predict each subject's rate under each condition from their own fit and
/// correlate with what they did. When early and late are both present the
/// late-minus-early difference is correlated too.
pub fn predict_and_correlate(
    fits: &[AgentParams],
    protocol: &ExperimentProtocol,
    observed: &[(BonusCondition, Vec<f64>)],
    shuffles: usize,
    seed: u64,
    q: usize,
) -> Result<Vec<CorrelationReport>> {
    if fits.len() < 3 {
        return Err(Error::TooFewSubjects {
            needed: 3,
            got: fits.len(),
        });
    }
    let mut reports = Vec::new();
    let mut predicted_by = Vec::new();
    for (i, (condition, obs)) in observed.iter().enumerate() {
        let predicted = fits
            .iter()
            .map(|a| predicted_rate(a, protocol, *condition, q))
            .collect::<Result<Vec<_>>>()?;
        reports.push(CorrelationReport::compute(
            &format!("{condition:?}").to_lowercase(),
            &predicted,
            obs,
            shuffles,
            seed.wrapping_add(i as u64),
        )?);
        predicted_by.push((*condition, predicted, obs));
    }
    let find = |c: BonusCondition| predicted_by.iter().find(|(k, _, _)| *k == c);
    if let (Some(early), Some(late)) = (find(BonusCondition::Early), find(BonusCondition::Late)) {
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
        reports.push(CorrelationReport::compute(
            "late_minus_early",
            &diff(&late.1, &early.1),
            &diff(late.2, early.2),
            shuffles,
            seed.wrapping_add(observed.len() as u64),
        )?);
    }
    Ok(reports)
}
