//! Dense-grid backward induction.
//!
//! `V(t, .)` is stored at uniformly spaced bias values and read between
//! nodes by linear interpolation. The Gaussian expectation of the
//! interpolant is evaluated segment by segment in closed form, so the only
//! approximation is the interpolation itself. Outside the grid the value is
//! continued along its asymptotes: slope -1 on the left, flat on the right.

use serde::{Deserialize, Serialize};

use super::{bisect_decreasing, Saturation, Threshold, ValueSolution};
use crate::error::{Error, Result};
use crate::normal::{cdf, linear_slab, pdf};
use crate::params::{AgentParams, BiasModel, TaskParams};
use crate::problem::Dgmdp;

/// Gaussian mass beyond this many standard deviations is ignored.
const WINDOW_SDS: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Grid covers `[-half_width, half_width]`; `None` picks the default extent.
    pub half_width: Option<f64>,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            half_width: None,
            points: 4001,
        }
    }
}

impl GridSpec {
    pub fn with_points(points: usize) -> Self {
        Self {
            half_width: None,
            points,
        }
    }

    /// Minimum half-width: six standard deviations of the bias walk at the
    /// last step.
    pub fn required_half_width(problem: &Dgmdp) -> f64 {
        let a = problem.agent();
        let tau = problem.tau() as f64;
        match a.bias {
            BiasModel::RandomWalk => 6.0 * (a.sigma1 + a.sigma * tau.sqrt()),
            BiasModel::Iid => 6.0 * a.sigma,
        }
    }

    pub fn resolve_half_width(&self, problem: &Dgmdp) -> f64 {
        self.half_width.unwrap_or_else(|| {
            let payoff = (1..=problem.tau())
                .map(|t| problem.defect_payoff(t).abs())
                .fold(problem.terminal().abs(), f64::max);
            Self::required_half_width(problem).max(3.0 * payoff).max(1.0)
        })
    }
}

#[derive(Clone, Debug)]
pub struct GridValueSolution {
    problem: Dgmdp,
    origin: f64,
    spacing: f64,
    /// `values[t - 1][j] = V(t, x_j)`.
    values: Vec<Vec<f64>>,
    /// `q_persist[t - 1][j]`.
    q_persist: Vec<Vec<f64>>,
    thresholds: Vec<Threshold>,
}

pub fn solve_grid(task: &TaskParams, agent: &AgentParams, grid: &GridSpec) -> Result<GridValueSolution> {
    solve_grid_problem(Dgmdp::new(task, agent)?, grid)
}

pub fn solve_grid_problem(problem: Dgmdp, grid: &GridSpec) -> Result<GridValueSolution> {
    if grid.points < 3 {
        return Err(Error::GridTooCoarse(grid.points));
    }
    let half_width = grid.resolve_half_width(&problem);
    let required = GridSpec::required_half_width(&problem);
    if !(half_width > 0.0) || half_width < required {
        return Err(Error::GridTooNarrow { half_width, required });
    }
    let n = grid.points;
    let spacing = 2.0 * half_width / (n - 1) as f64;
    let origin = -half_width;
    let nodes: Vec<f64> = (0..n).map(|j| origin + spacing * j as f64).collect();

    let tau = problem.tau();
    let gamma = problem.gamma();
    let sigma = problem.sigma();
    let mut values = vec![Vec::new(); tau];
    let mut q_persist = vec![Vec::new(); tau];

    let s_tau = problem.defect_payoff(tau);
    q_persist[tau - 1] = vec![problem.terminal(); n];
    values[tau - 1] = nodes.iter().map(|&x| (s_tau - x).max(problem.terminal())).collect();

    let kernel = (sigma > 0.0).then(|| NodeKernel::new(spacing, sigma));
    for t in (1..tau).rev() {
        let next = &values[t];
        let cont: Vec<f64> = match (problem.bias(), &kernel) {
            (BiasModel::Iid, _) => {
                let e = expect_interp(origin, spacing, next, 0.0, sigma);
                vec![e; n]
            }
            (BiasModel::RandomWalk, Some(k)) => k.expect_all(next),
            (BiasModel::RandomWalk, None) => next.clone(),
        };
        let r = problem.persist_reward(t);
        let s = problem.defect_payoff(t);
        let qp: Vec<f64> = cont.iter().map(|e| r + gamma * e).collect();
        values[t - 1] = nodes.iter().zip(&qp).map(|(&x, &q)| (s - x).max(q)).collect();
        q_persist[t - 1] = qp;
    }

    let mut sol = GridValueSolution {
        problem,
        origin,
        spacing,
        values,
        q_persist,
        thresholds: Vec::new(),
    };
    sol.thresholds = (1..=tau).map(|t| sol.find_threshold(t)).collect();
    Ok(sol)
}

impl GridValueSolution {
    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values[0].len()).map(move |j| self.origin + self.spacing * j as f64)
    }

    pub fn half_width(&self) -> f64 {
        -self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Node values of `V(t, .)`.
    pub fn values_at(&self, t: usize) -> &[f64] {
        &self.values[t - 1]
    }

    /// Node values of `Q(t, ., persist)`.
    pub fn q_persist_at(&self, t: usize) -> &[f64] {
        &self.q_persist[t - 1]
    }

    fn find_threshold(&self, t: usize) -> Threshold {
        let p = &self.problem;
        let s = p.defect_payoff(t);
        if t == p.tau() {
            return Threshold::exact(s - p.terminal());
        }
        let qp = &self.q_persist[t - 1];
        let gap = |j: usize| s - (self.origin + self.spacing * j as f64) - qp[j];
        let n = qp.len();
        let Some(first_neg) = (0..n).find(|&j| gap(j) < 0.0) else {
            return Threshold {
                w: self.half_width(),
                saturation: Some(Saturation::AlwaysDefect),
            };
        };
        if first_neg == 0 {
            return Threshold {
                w: self.origin,
                saturation: Some(Saturation::AlwaysPersist),
            };
        }
        let lo = self.origin + self.spacing * (first_neg - 1) as f64;
        let hi = self.origin + self.spacing * first_neg as f64;
        let r = p.persist_reward(t);
        let gamma = p.gamma();
        let w = bisect_decreasing(|w| s - w - (r + gamma * self.continuation(t, w)), lo, hi);
        Threshold::exact(w)
    }
}

impl ValueSolution for GridValueSolution {
    fn problem(&self) -> &Dgmdp {
        &self.problem
    }

    fn continuation(&self, t: usize, w: f64) -> f64 {
        let next = &self.values[t];
        let sigma = self.problem.sigma();
        match self.problem.bias() {
            BiasModel::RandomWalk => expect_interp(self.origin, self.spacing, next, w, sigma),
            BiasModel::Iid => expect_interp(self.origin, self.spacing, next, 0.0, sigma),
        }
    }

    fn value(&self, t: usize, w: f64) -> f64 {
        interp(self.origin, self.spacing, &self.values[t - 1], w)
    }

    fn thresholds(&self) -> &[Threshold] {
        &self.thresholds
    }
}

/// Linear interpolation with asymptotic continuation outside the grid.
fn interp(origin: f64, spacing: f64, vals: &[f64], x: f64) -> f64 {
    let n = vals.len();
    let last = origin + spacing * (n - 1) as f64;
    if x <= origin {
        return vals[0] - (x - origin);
    }
    if x >= last {
        return vals[n - 1];
    }
    let u = (x - origin) / spacing;
    let i = (u.floor() as usize).min(n - 2);
    let frac = u - i as f64;
    vals[i] + frac * (vals[i + 1] - vals[i])
}

/// `E[f(w + sigma Z)]` for the grid interpolant `f`.
fn expect_interp(origin: f64, spacing: f64, vals: &[f64], w: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return interp(origin, spacing, vals, w);
    }
    let n = vals.len();
    let reach = WINDOW_SDS * sigma;
    let lo_f = ((w - reach - origin) / spacing).floor();
    let hi_f = ((w + reach - origin) / spacing).ceil();
    if hi_f < 0.0 {
        return vals[0] - (w - origin);
    }
    if lo_f > (n - 1) as f64 {
        return vals[n - 1];
    }
    let i_lo = lo_f.max(0.0) as usize;
    let i_hi = (hi_f as usize).min(n - 1);
    let node = |i: usize| origin + spacing * i as f64;

    let z_lo = (node(i_lo) - w) / sigma;
    let mut total = linear_slab(vals[i_lo] + node(i_lo), -1.0, w, sigma, f64::NEG_INFINITY, z_lo);
    let mut cdf_prev = cdf(z_lo);
    let mut pdf_prev = pdf(z_lo);
    for i in i_lo..i_hi {
        let z_next = (node(i + 1) - w) / sigma;
        let cdf_next = cdf(z_next);
        let pdf_next = pdf(z_next);
        let slope = (vals[i + 1] - vals[i]) / spacing;
        let intercept = vals[i] - slope * node(i);
        total += (cdf_next - cdf_prev) * (intercept + slope * w) + slope * sigma * (pdf_prev - pdf_next);
        cdf_prev = cdf_next;
        pdf_prev = pdf_next;
    }
    total + (1.0 - cdf_prev) * vals[i_hi]
}

/// Precomputed normal cdf/pdf at node offsets, for node-aligned expectations.
struct NodeKernel {
    reach: usize,
    cdf: Vec<f64>,
    pdf: Vec<f64>,
    spacing: f64,
    sigma: f64,
}

impl NodeKernel {
    fn new(spacing: f64, sigma: f64) -> Self {
        let reach = ((WINDOW_SDS * sigma) / spacing).ceil() as usize;
        let offsets = (0..=2 * reach).map(|k| (k as f64 - reach as f64) * spacing / sigma);
        let (cdf, pdf) = offsets.map(|z| (cdf(z), pdf(z))).unzip();
        Self {
            reach,
            cdf,
            pdf,
            spacing,
            sigma,
        }
    }

    /// Offset table index for node `i` relative to node `j`.
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i + self.reach - j
    }

    fn expect_all(&self, vals: &[f64]) -> Vec<f64> {
        let n = vals.len();
        let h = self.spacing;
        let s = self.sigma;
        let slopes: Vec<f64> = vals.windows(2).map(|p| (p[1] - p[0]) / h).collect();
        (0..n)
            .map(|j| {
                let i_lo = j.saturating_sub(self.reach);
                let i_hi = (j + self.reach).min(n - 1);
                let offset_lo = (i_lo as f64 - j as f64) * h;
                let k_lo = self.idx(i_lo, j);
                // Left tail: slope -1 through node i_lo.
                let mut total = self.cdf[k_lo] * (vals[i_lo] + offset_lo) + s * self.pdf[k_lo];
                for i in i_lo..i_hi {
                    let ka = self.idx(i, j);
                    let slope = slopes[i];
                    // Line through node i written relative to w = x_j.
                    let at_w = vals[i] - slope * (i as f64 - j as f64) * h;
                    total += (self.cdf[ka + 1] - self.cdf[ka]) * at_w + slope * s * (self.pdf[ka] - self.pdf[ka + 1]);
                }
                total + (1.0 - self.cdf[self.idx(i_hi, j)]) * vals[i_hi]
            })
            .collect()
    }
}
