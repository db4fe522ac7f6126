//! Piecewise-linear backward induction.
//!
//! At every step the value function is represented by three lines:
//! the defection asymptote `S_t - w` on the left, a middle segment
//! `b_t + a_t w`, and the flat steadfast-persistence value `c_t` on the
//! right. Because `V(t, .)` is convex, the representation is
//! `max(S_t - w, b_t + a_t w, c_t)` with breakpoints
//! `(S_t - b_t) / (a_t + 1)` and `(c_t - b_t) / a_t`.
//!
//! The Gaussian expectation of that function has a closed form in the
//! standard normal cdf and pdf, so each backup evaluates the exact one-step
//! value `max(S - w, r + gamma E[V(t + 1, w + sigma Z)])` and refits the
//! middle segment to it by Levenberg-Marquardt least squares.

use serde::Serialize;

use super::{bisect_decreasing, Saturation, Threshold, ValueSolution};
use crate::error::Result;
use crate::normal::{cdf, pdf};
use crate::params::{AgentParams, BiasModel, TaskParams};
use crate::problem::Dgmdp;

/// Samples used for each segment fit.
const FIT_POINTS: usize = 101;
/// Deviation from the two asymptotes, relative to the payoff scale, below
/// which the backed-up value counts as piecewise linear.
const REGION_TOL: f64 = 5e-5;
const MAX_SCAN: usize = 4000;
const MAX_LM_ITERS: u32 = 200;

/// How a step's middle segment was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SegmentFit {
    /// Final step, exact two-line value.
    Seed,
    /// The backed-up value is already the two asymptotes; no middle segment.
    Degenerate,
    Fitted {
        iterations: u32,
    },
    /// The least-squares fit failed; the middle segment is the secant
    /// across the fit region.
    SecantFallback,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PwlStep {
    /// Middle-segment slope `a_t`.
    pub slope: f64,
    /// Middle-segment intercept `b_t`.
    pub intercept: f64,
    /// Steadfast-persistence value `c_t`.
    pub persist_value: f64,
    /// Left breakpoint, where the middle segment meets `S_t - w`.
    pub lower: f64,
    /// Right breakpoint, where the middle segment meets `c_t`.
    pub upper: f64,
    /// Unbiased defection payoff `S_t`.
    pub defect_value: f64,
    pub fit: SegmentFit,
}

impl PwlStep {
    pub fn value(&self, w: f64) -> f64 {
        if w <= self.lower {
            self.defect_value - w
        } else if w >= self.upper {
            self.persist_value
        } else {
            self.intercept + self.slope * w
        }
    }

    /// Standardized breakpoints `(z-, z+)` for a Gaussian step of size `sigma` from `w`.
    pub fn z_bounds(&self, w: f64, sigma: f64) -> (f64, f64) {
        ((self.lower - w) / sigma, (self.upper - w) / sigma)
    }

    /// `E[V(w + sigma Z)]` in closed form.
    pub fn expect(&self, w: f64, sigma: f64) -> f64 {
        if sigma == 0.0 {
            return self.value(w);
        }
        let (zm, zp) = self.z_bounds(w, sigma);
        let (cm, cp) = (cdf(zm), cdf(zp));
        let (pm, pp) = (pdf(zm), pdf(zp));
        let middle = if self.lower < self.upper {
            (cp - cm) * (self.intercept + self.slope * w) + sigma * self.slope * (pm - pp)
        } else {
            0.0
        };
        cm * (self.defect_value - w) + sigma * pm + middle + (1.0 - cp) * self.persist_value
    }

    fn seed(defect_value: f64, terminal: f64) -> Self {
        let corner = defect_value - terminal;
        Self {
            slope: terminal,
            intercept: terminal,
            persist_value: terminal,
            lower: corner,
            upper: corner,
            defect_value,
            fit: SegmentFit::Seed,
        }
    }

    fn degenerate(defect_value: f64, persist_value: f64) -> Self {
        let corner = defect_value - persist_value;
        Self {
            slope: 0.0,
            intercept: persist_value,
            persist_value,
            lower: corner,
            upper: corner,
            defect_value,
            fit: SegmentFit::Degenerate,
        }
    }

    /// Three-line step from a middle segment, if its slope lies in (-1, 0)
    /// and its breakpoints are ordered.
    fn from_segment(defect_value: f64, persist_value: f64, slope: f64, intercept: f64, fit: SegmentFit) -> Option<Self> {
        if !(slope > -1.0 && slope < 0.0 && intercept.is_finite()) {
            return None;
        }
        let lower = (defect_value - intercept) / (slope + 1.0);
        let upper = (persist_value - intercept) / slope;
        (lower < upper).then_some(Self {
            slope,
            intercept,
            persist_value,
            lower,
            upper,
            defect_value,
            fit,
        })
    }
}

#[derive(Clone, Debug)]
pub struct PwlValueSolution {
    problem: Dgmdp,
    steps: Vec<PwlStep>,
    thresholds: Vec<Threshold>,
}

pub fn solve_pla(task: &TaskParams, agent: &AgentParams) -> Result<PwlValueSolution> {
    Ok(solve_pla_problem(Dgmdp::new(task, agent)?))
}

pub fn solve_pla_problem(problem: Dgmdp) -> PwlValueSolution {
    let tau = problem.tau();
    let mut steps = vec![PwlStep::seed(problem.defect_payoff(tau), problem.terminal()); tau];
    let mut thresholds = vec![Threshold::exact(problem.defect_payoff(tau) - problem.terminal()); tau];
    for t in (1..tau).rev() {
        let backup = Backup::new(&problem, t, &steps[t]);
        let (fitted, threshold) = (backup.fit(), backup.threshold());
        steps[t - 1] = fitted;
        thresholds[t - 1] = threshold;
    }
    PwlValueSolution {
        problem,
        steps,
        thresholds,
    }
}

impl PwlValueSolution {
    pub fn steps(&self) -> &[PwlStep] {
        &self.steps
    }

    pub fn step(&self, t: usize) -> &PwlStep {
        &self.steps[t - 1]
    }

    /// Steps whose segment fit fell back to the secant.
    pub fn fallback_steps(&self) -> Vec<usize> {
        self.steps
            .iter()
            .enumerate()
            .filter(|(_, s)| s.fit == SegmentFit::SecantFallback)
            .map(|(i, _)| i + 1)
            .collect()
    }
}

impl ValueSolution for PwlValueSolution {
    fn problem(&self) -> &Dgmdp {
        &self.problem
    }

    fn continuation(&self, t: usize, w: f64) -> f64 {
        let at = match self.problem.bias() {
            BiasModel::RandomWalk => w,
            BiasModel::Iid => 0.0,
        };
        self.steps[t].expect(at, self.problem.sigma())
    }

    fn value(&self, t: usize, w: f64) -> f64 {
        self.steps[t - 1].value(w)
    }

    fn thresholds(&self) -> &[Threshold] {
        &self.thresholds
    }
}

/// One backup from step `t + 1` to step `t`.
struct Backup<'a> {
    defect: f64,
    reward: f64,
    gamma: f64,
    sigma: f64,
    iid: bool,
    next: &'a PwlStep,
    scale: f64,
}

impl<'a> Backup<'a> {
    fn new(problem: &Dgmdp, t: usize, next: &'a PwlStep) -> Self {
        Self {
            defect: problem.defect_payoff(t),
            reward: problem.persist_reward(t),
            gamma: problem.gamma(),
            sigma: problem.sigma(),
            iid: problem.bias() == BiasModel::Iid,
            next,
            scale: problem.payoff_scale(),
        }
    }

    fn q_persist(&self, w: f64) -> f64 {
        let at = if self.iid { 0.0 } else { w };
        self.reward + self.gamma * self.next.expect(at, self.sigma)
    }

    fn exact(&self, w: f64) -> f64 {
        (self.defect - w).max(self.q_persist(w))
    }

    /// Right asymptote of the backed-up value.
    fn persist_value(&self) -> f64 {
        if self.iid {
            self.q_persist(0.0)
        } else {
            self.reward + self.gamma * self.next.persist_value
        }
    }

    fn probe_step(&self) -> f64 {
        self.sigma.max(1e-3 * self.scale) / 4.0
    }

    fn fit(&self) -> PwlStep {
        let c = self.persist_value();
        let s = self.defect;
        if self.iid {
            return PwlStep::degenerate(s, c);
        }
        let corner = s - c;
        let tol = REGION_TOL * self.scale;
        let deviation = |w: f64| self.exact(w) - (s - w).max(c);
        if deviation(corner) <= tol {
            return PwlStep::degenerate(s, c);
        }
        let step = self.probe_step();
        let mut left = corner;
        for _ in 0..MAX_SCAN {
            if deviation(left) <= tol {
                break;
            }
            left -= step;
        }
        let mut right = corner;
        for _ in 0..MAX_SCAN {
            if deviation(right) <= tol {
                break;
            }
            right += step;
        }

        let ws: Vec<f64> = (0..FIT_POINTS)
            .map(|k| left + (right - left) * k as f64 / (FIT_POINTS - 1) as f64)
            .collect();
        let vs: Vec<f64> = ws.iter().map(|&w| self.exact(w)).collect();

        let secant_slope = (vs[FIT_POINTS - 1] - vs[0]) / (right - left);
        let secant_at_corner = vs[0] + secant_slope * (corner - left);
        let fitted = levenberg_marquardt(&ws, &vs, s, c, corner, secant_slope, secant_at_corner).and_then(
            |(slope, at_corner, iterations)| {
                PwlStep::from_segment(s, c, slope, at_corner - slope * corner, SegmentFit::Fitted { iterations })
            },
        );
        fitted
            .or_else(|| PwlStep::from_segment(s, c, secant_slope, vs[0] - secant_slope * left, SegmentFit::SecantFallback))
            .unwrap_or_else(|| PwlStep::degenerate(s, c))
    }

    fn threshold(&self) -> Threshold {
        let s = self.defect;
        if self.iid {
            return Threshold::exact(s - self.persist_value());
        }
        let gap = |w: f64| s - w - self.q_persist(w);
        let start = s - self.persist_value();
        let mut delta = self.probe_step().max(f64::MIN_POSITIVE);
        let mut lo = start;
        let mut found = false;
        for _ in 0..1100 {
            if gap(lo) >= 0.0 {
                found = true;
                break;
            }
            lo -= delta;
            delta *= 2.0;
        }
        if !found {
            return Threshold {
                w: lo,
                saturation: Some(Saturation::AlwaysPersist),
            };
        }
        let mut delta = self.probe_step().max(f64::MIN_POSITIVE);
        let mut hi = start.max(lo);
        found = false;
        for _ in 0..1100 {
            if gap(hi) < 0.0 {
                found = true;
                break;
            }
            hi += delta;
            delta *= 2.0;
        }
        if !found {
            return Threshold {
                w: hi,
                saturation: Some(Saturation::AlwaysDefect),
            };
        }
        Threshold::exact(bisect_decreasing(gap, lo, hi))
    }
}

/// Least-squares fit of `max(s - w, m + a (w - corner), c)` to `(ws, vs)`
/// over `(a, m)`. Returns `(a, m, iterations)` on convergence.
fn levenberg_marquardt(ws: &[f64], vs: &[f64], s: f64, c: f64, corner: f64, slope0: f64, level0: f64) -> Option<(f64, f64, u32)> {
    let model = |a: f64, m: f64, w: f64| (s - w).max(m + a * (w - corner)).max(c);
    let cost = |a: f64, m: f64| ws.iter().zip(vs).map(|(&w, &v)| (model(a, m, w) - v).powi(2)).sum::<f64>();
    let (mut a, mut m) = (slope0, level0);
    let mut current = cost(a, m);
    let mut lambda = 1e-3;
    let scale = vs.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1e-300);
    for iter in 1..=MAX_LM_ITERS {
        let (mut jaa, mut jam, mut jmm, mut ga, mut gm) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&w, &v) in ws.iter().zip(vs) {
            let dx = w - corner;
            let line = m + a * dx;
            if line >= s - w && line >= c {
                let r = line - v;
                jaa += dx * dx;
                jam += dx;
                jmm += 1.0;
                ga += dx * r;
                gm += r;
            }
        }
        if jmm == 0.0 {
            return None;
        }
        let grad_norm = ga.abs().max(gm.abs());
        if grad_norm <= 1e-14 * scale * scale {
            return Some((a, m, iter));
        }
        let mut improved = false;
        while lambda < 1e12 {
            let (d11, d22) = (jaa * (1.0 + lambda), jmm * (1.0 + lambda));
            let det = d11 * d22 - jam * jam;
            if det.abs() < f64::MIN_POSITIVE {
                lambda *= 10.0;
                continue;
            }
            let da = (-ga * d22 + gm * jam) / det;
            let dm = (-gm * d11 + ga * jam) / det;
            let trial = cost(a + da, m + dm);
            if trial < current {
                a += da;
                m += dm;
                let rel = (current - trial) / current.max(1e-300);
                current = trial;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if rel < 1e-13 || (da.abs() < 1e-13 && dm.abs() < 1e-13 * scale) {
                    return Some((a, m, iter));
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // No descent direction left: a local minimum.
            return Some((a, m, iter));
        }
    }
    None
}
