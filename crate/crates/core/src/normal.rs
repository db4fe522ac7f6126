//! Standard normal helpers and closed-form Gaussian expectations of
//! piecewise-linear functions.

use statrs::function::erf::{erfc, erfc_inv};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

#[inline]
pub fn cdf(z: f64) -> f64 {
    if z == f64::INFINITY {
        1.0
    } else if z == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-z / std::f64::consts::SQRT_2)
    }
}

/// Inverse of [`cdf`] on (0, 1).
pub fn quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Equal-probability quantiles of N(0, sd^2) at the midpoints (i - 0.5) / q.
pub fn midpoint_quantiles(q: usize, sd: f64) -> Vec<f64> {
    if sd == 0.0 {
        return vec![0.0; q];
    }
    (0..q).map(|i| sd * quantile((i as f64 + 0.5) / q as f64)).collect()
}

/// E[f(w + sigma Z)] restricted to the slab where the argument lies in
/// `[lo, hi]`, for the line `f(x) = intercept + slope * x`.
///
/// Uses `int_a^b (alpha + beta (w + s z)) phi(z) dz
///   = (Phi(b) - Phi(a)) (alpha + beta w) + beta s (phi(a) - phi(b))`.
#[inline]
pub fn linear_slab(intercept: f64, slope: f64, w: f64, sigma: f64, za: f64, zb: f64) -> f64 {
    (cdf(zb) - cdf(za)) * (intercept + slope * w) + slope * sigma * (pdf(za) - pdf(zb))
}
