//! Numeric property checks on the beta quality law and the percentile
//! transform. Every quantity is computed by quadrature, so a failure here
//! points at either the numerics or the claimed property itself.

use serde::Serialize;

use crate::quality::theory::{
    beta_cdf, drift_fluctuation_m, participation_rate, percentile_ratio_bound, shift_fluctuation,
};
use crate::quality::{boxcox, BoxCoxFit};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
const SHAPES: [(f64, f64); 3] = [(2.0, 2.0), (3.0, 2.0), (2.0, 5.0)];
const SHIFT_DELTA: f64 = 0.05;
const DRIFT_DELTA: f64 = 0.5;
const RATIO_GRID: usize = 1000;
const ROUND_TRIP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateOptions {
    pub tolerance: f64,
    /// Smaller grids: one shape, three alphas, two exponents.
    pub narrow: bool,
    /// Negates the shift fluctuation ratio. Exists so callers can confirm a
    /// broken computation is actually reported.
    pub flip_fluctuation_sign: bool,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            narrow: false,
            flip_fluctuation_sign: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// Failing grid point, or a short summary when passed.
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: String, failure: Option<String>, summary: String) -> Self {
        match failure {
            Some(detail) => Self {
                name,
                passed: false,
                detail,
            },
            None => Self {
                name,
                passed: true,
                detail: summary,
            },
        }
    }
}

fn shapes(opts: &ValidateOptions) -> &'static [(f64, f64)] {
    if opts.narrow {
        &SHAPES[..1]
    } else {
        &SHAPES
    }
}

fn alphas(opts: &ValidateOptions) -> Vec<f64> {
    if opts.narrow {
        vec![0.3, 0.5, 0.7]
    } else {
        (1..=9).map(|i| i as f64 / 10.0).collect()
    }
}

/// First index where `values` drops by more than `tol`.
fn first_decrease(values: &[f64], tol: f64) -> Option<usize> {
    values.windows(2).position(|w| w[1] < w[0] - tol)
}

fn shift_monotone(m: f64, n: f64, opts: &ValidateOptions) -> CheckOutcome {
    let grid = alphas(opts);
    let sign = if opts.flip_fluctuation_sign {
        -1.0
    } else {
        1.0
    };
    let f: Vec<f64> = grid
        .iter()
        .map(|&a| sign * shift_fluctuation(m, n, a, SHIFT_DELTA))
        .collect();
    let failure = first_decrease(&f, opts.tolerance).map(|i| {
        format!(
            "F(alpha={}) = {:.12} > F(alpha={}) = {:.12}",
            grid[i],
            f[i],
            grid[i + 1],
            f[i + 1]
        )
    });
    CheckOutcome::new(
        format!("Theorem 2: shift fluctuation non-decreasing (m={m}, n={n})"),
        failure,
        format!("F from {:.6} to {:.6}", f[0], f[f.len() - 1]),
    )
}

fn pr_monotone_in_shapes(m: f64, n: f64, opts: &ValidateOptions) -> Vec<CheckOutcome> {
    let steps = [0.0, 0.5, 1.0, 2.0];
    let tol = opts.tolerance;
    let mut m_fail = None;
    let mut n_fail = None;
    for &a in &alphas(opts) {
        let by_m: Vec<f64> = steps
            .iter()
            .map(|d| participation_rate(m + d, n, a))
            .collect();
        if m_fail.is_none() {
            m_fail = first_decrease(&by_m, tol).map(|i| {
                format!(
                    "alpha={a}: PR(m={}) = {:.12} > PR(m={}) = {:.12}",
                    m + steps[i],
                    by_m[i],
                    m + steps[i + 1],
                    by_m[i + 1]
                )
            });
        }
        // Decreasing in n is non-decreasing in -PR.
        let by_n: Vec<f64> = steps
            .iter()
            .map(|d| -participation_rate(m, n + d, a))
            .collect();
        if n_fail.is_none() {
            n_fail = first_decrease(&by_n, tol).map(|i| {
                format!(
                    "alpha={a}: PR(n={}) = {:.12} < PR(n={}) = {:.12}",
                    n + steps[i],
                    -by_n[i],
                    n + steps[i + 1],
                    -by_n[i + 1]
                )
            });
        }
    }
    vec![
        CheckOutcome::new(
            format!("Theorem 3: PR increasing in m (m={m}, n={n})"),
            m_fail,
            format!("m steps {steps:?}"),
        ),
        CheckOutcome::new(
            format!("Theorem 3: PR decreasing in n (m={m}, n={n})"),
            n_fail,
            format!("n steps {steps:?}"),
        ),
    ]
}

fn drift_monotone(m: f64, n: f64, opts: &ValidateOptions) -> CheckOutcome {
    let grid = alphas(opts);
    let f: Vec<f64> = grid
        .iter()
        .map(|&a| drift_fluctuation_m(m, n, a, DRIFT_DELTA))
        .collect();
    let failure = first_decrease(&f, opts.tolerance).map(|i| {
        format!(
            "ratio(alpha={}) = {:.12} > ratio(alpha={}) = {:.12}",
            grid[i],
            f[i],
            grid[i + 1],
            f[i + 1]
        )
    });
    CheckOutcome::new(
        format!("Theorem 3: drift fluctuation non-decreasing (m={m}, n={n}, dm={DRIFT_DELTA})"),
        failure,
        format!("ratio from {:.6} to {:.6}", f[0], f[f.len() - 1]),
    )
}

fn ratio_bound(m: f64, n: f64, opts: &ValidateOptions) -> CheckOutcome {
    let bound = percentile_ratio_bound(m, n);
    let name = format!("Lemma 1: percentile ratio bound (m={m}, n={n})");
    if !bound.k1.is_finite() || !(bound.argmax > 0.0 && bound.argmax < 1.0) {
        return CheckOutcome::new(
            name,
            Some(format!("k1 = {}, argmax = {}", bound.k1, bound.argmax)),
            String::new(),
        );
    }
    let points = if opts.narrow { 100 } else { RATIO_GRID };
    let failure = (1..=points)
        .map(|i| i as f64 / points as f64)
        .find_map(|a| {
            let cdf = beta_cdf(m, n, a);
            (cdf > bound.k1 * a + opts.tolerance).then(|| {
                format!(
                    "alpha={a}: cdf = {cdf:.12} > k1*alpha = {:.12}",
                    bound.k1 * a
                )
            })
        });
    CheckOutcome::new(
        name,
        failure,
        format!("k1 = {:.9} at alpha = {:.9}", bound.k1, bound.argmax),
    )
}

fn round_trip(lambda: f64, epsilon: f64) -> CheckOutcome {
    let grid: Vec<f64> = (1..=99).map(|i| i as f64 / 100.0).collect();
    let name = format!("transform round trip (lambda={lambda}, epsilon={epsilon})");
    // Centre and spread chosen so the whole grid maps well inside the
    // percentile clamp.
    let ys: Vec<f64> = grid.iter().map(|&v| boxcox(lambda, v).unwrap()).collect();
    let mu = 0.5 * (ys[0] + ys[ys.len() - 1]);
    let sigma = (ys[ys.len() - 1] - ys[0]) / 4.0;
    let fit = match BoxCoxFit::new(lambda, mu, sigma, epsilon) {
        Ok(f) => f,
        Err(e) => return CheckOutcome::new(name, Some(e.to_string()), String::new()),
    };
    let mut worst = 0.0f64;
    for &v in &grid {
        let back = fit.forward(v).and_then(|p| fit.backward(p));
        match back {
            Ok(b) if (b - v).abs() <= ROUND_TRIP_TOL => worst = worst.max((b - v).abs()),
            Ok(b) => {
                return CheckOutcome::new(
                    name,
                    Some(format!("v={v}: came back as {b}")),
                    String::new(),
                )
            }
            Err(e) => return CheckOutcome::new(name, Some(format!("v={v}: {e}")), String::new()),
        }
    }
    CheckOutcome::new(name, None, format!("max error {worst:.3e}"))
}

/// Runs every check and returns one outcome per check, in a fixed order.
pub fn run_checks(opts: &ValidateOptions) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    for &(m, n) in shapes(opts) {
        out.push(shift_monotone(m, n, opts));
    }
    for &(m, n) in shapes(opts) {
        out.extend(pr_monotone_in_shapes(m, n, opts));
        out.push(drift_monotone(m, n, opts));
    }
    for &(m, n) in shapes(opts) {
        out.push(ratio_bound(m, n, opts));
    }
    let (lambdas, epsilons): (&[f64], &[f64]) = if opts.narrow {
        (&[0.0, 1.0], &[0.0])
    } else {
        (&[-1.0, 0.0, 0.5, 1.0], &[0.0, 0.1, 1.0])
    };
    for &l in lambdas {
        for &e in epsilons {
            out.push(round_trip(l, e));
        }
    }
    out
}
