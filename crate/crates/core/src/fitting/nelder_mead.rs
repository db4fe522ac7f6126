//! Derivative-free simplex minimization.

#[derive(Clone, Debug, PartialEq)]
pub struct Simplex {
    /// Initial step along each coordinate.
    pub step: Vec<f64>,
    pub max_evals: usize,
    /// Stop when the spread of function values falls below this.
    pub f_tol: f64,
    /// ...and the simplex diameter below this.
    pub x_tol: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evals: usize,
    pub converged: bool,
}

impl Simplex {
    pub fn new(step: Vec<f64>) -> Self {
        Self {
            step,
            max_evals: 600,
            f_tol: 1e-10,
            x_tol: 1e-6,
        }
    }

    pub fn minimize(&self, f: impl Fn(&[f64]) -> f64, x0: &[f64]) -> Minimum {
        let n = x0.len();
        let evals = std::cell::Cell::new(0usize);
        let eval = |x: &[f64]| {
            evals.set(evals.get() + 1);
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };
        if n == 0 {
            let v = eval(x0);
            return Minimum {
                x: Vec::new(),
                f: v,
                iterations: 0,
                evals: 1,
                converged: true,
            };
        }
        let mut pts: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        pts.push((x0.to_vec(), eval(x0)));
        for i in 0..n {
            let mut x = x0.to_vec();
            x[i] += self.step[i];
            let v = eval(&x);
            pts.push((x, v));
        }

        let mut iterations = 0;
        let mut converged = false;
        while evals.get() < self.max_evals {
            pts.sort_by(|a, b| a.1.total_cmp(&b.1));
            let spread = pts[n].1 - pts[0].1;
            let diameter = pts[1..]
                .iter()
                .flat_map(|(x, _)| x.iter().zip(&pts[0].0).map(|(a, b)| (a - b).abs()))
                .fold(0.0f64, f64::max);
            if spread.abs() <= self.f_tol && diameter <= self.x_tol {
                converged = true;
                break;
            }
            iterations += 1;

            let centroid: Vec<f64> = (0..n)
                .map(|j| pts[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
                .collect();
            let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&pts[n].0).map(|(c, w)| c + t * (w - c)).collect() };

            let xr = along(-1.0);
            let fr = eval(&xr);
            if fr < pts[0].1 {
                let xe = along(-2.0);
                let fe = eval(&xe);
                pts[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < pts[n - 1].1 {
                pts[n] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < pts[n].1 {
                let x = along(-0.5);
                let v = eval(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = eval(&x);
                (x, v)
            };
            if fc < pts[n].1.min(fr) {
                pts[n] = (xc, fc);
                continue;
            }
            // Shrink toward the best vertex.
            let best = pts[0].0.clone();
            for p in pts.iter_mut().skip(1) {
                p.0 = best.iter().zip(&p.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
                p.1 = eval(&p.0);
            }
        }
        pts.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, f) = pts.swap_remove(0);
        Minimum {
            x,
            f,
            iterations,
            evals: evals.get(),
            converged,
        }
    }
}
