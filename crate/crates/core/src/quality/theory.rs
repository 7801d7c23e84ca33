//! Quadrature-based quantities of the beta quality law: participation rates,
//! their fluctuation ratios, and the percentile-to-dual ratio bound.
//!
//! "Participation rate" at dual `alpha` is the probability mass of qualities
//! above `alpha`. Everything here is computed by adaptive quadrature of the
//! unnormalized density `v^(m-1) (1-v)^(n-1)`, never through closed forms.

use super::quadrature::integrate_rel;

const REL_TOL: f64 = 1e-13;

fn kernel(m: f64, n: f64) -> impl Fn(f64) -> f64 {
    move |v: f64| v.powf(m - 1.0) * (1.0 - v).powf(n - 1.0)
}

/// `∫_a^b v^(m-1) (1-v)^(n-1) dv`.
pub fn kernel_mass(m: f64, n: f64, a: f64, b: f64) -> f64 {
    integrate_rel(kernel(m, n), a, b, REL_TOL)
}

/// Beta function `B(m, n)` by quadrature.
pub fn beta_norm(m: f64, n: f64) -> f64 {
    kernel_mass(m, n, 0.0, 1.0)
}

/// `P(v > alpha)` for `v ~ Beta(m, n)`.
pub fn participation_rate(m: f64, n: f64, alpha: f64) -> f64 {
    kernel_mass(m, n, alpha.clamp(0.0, 1.0), 1.0) / beta_norm(m, n)
}

/// `P(v <= x)` for `v ~ Beta(m, n)`.
pub fn beta_cdf(m: f64, n: f64, x: f64) -> f64 {
    kernel_mass(m, n, 0.0, x.clamp(0.0, 1.0)) / beta_norm(m, n)
}

/// Ratio `PR(alpha - delta) / PR(alpha)`: how much participation grows when
/// the dual drops by `delta`.
pub fn shift_fluctuation(m: f64, n: f64, alpha: f64, delta: f64) -> f64 {
    kernel_mass(m, n, alpha - delta, 1.0) / kernel_mass(m, n, alpha, 1.0)
}

/// Ratio `PR_alpha(m + delta, n) / PR_alpha(m, n)`: participation change
/// under a drift of the first shape parameter.
pub fn drift_fluctuation_m(m: f64, n: f64, alpha: f64, delta: f64) -> f64 {
    participation_rate(m + delta, n, alpha) / participation_rate(m, n, alpha)
}

/// Supremum of `cdf(alpha) / alpha` over `(0, 1]` and where it is attained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PercentileRatioBound {
    pub argmax: f64,
    pub k1: f64,
}

/// Locates the maximizer of `cdf(alpha) / alpha`.
///
/// The ratio's derivative has the sign of
/// `alpha^m (1-alpha)^(n-1) - ∫_0^alpha s^(m-1) (1-s)^(n-1) ds`, which is
/// positive right of zero, increases up to the mode `(m-1)/(m+n-2)` and then
/// falls to `-B(m, n)` at one. Its single root past the mode is found by
/// bisection.
pub fn percentile_ratio_bound(m: f64, n: f64) -> PercentileRatioBound {
    let g = |a: f64| a.powf(m) * (1.0 - a).powf(n - 1.0) - kernel_mass(m, n, 0.0, a);
    let mut lo = (m - 1.0) / (m + n - 2.0);
    let mut hi = 1.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    let argmax = 0.5 * (lo + hi);
    PercentileRatioBound {
        argmax,
        k1: beta_cdf(m, n, argmax) / argmax,
    }
}
