use serde::{Deserialize, Serialize};

use super::normal::{normal_cdf, normal_quantile};
use crate::{Error, Result};

/// Below this magnitude the exponent is treated as exactly zero (log branch).
const LAMBDA_ZERO: f64 = 1e-9;
const LAMBDA_MIN: f64 = -2.0;
const LAMBDA_MAX: f64 = 2.0;
const LAMBDA_TOL: f64 = 1e-4;
/// Percentile inputs to the backward transform are clamped to this margin.
pub(crate) const PERCENTILE_CLAMP: f64 = 1e-6;
pub const MIN_FIT_SAMPLES: usize = 30;

fn check_positive(v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "box-cox input",
            value: v,
        })
    }
}

#[inline]
fn boxcox_ln(lambda: f64, ln_v: f64) -> f64 {
    if lambda.abs() < LAMBDA_ZERO {
        ln_v
    } else {
        (lambda * ln_v).exp_m1() / lambda
    }
}

/// Box-Cox power transform of a positive value.
pub fn boxcox(lambda: f64, v: f64) -> Result<f64> {
    check_positive(v)?;
    Ok(boxcox_ln(lambda, v.ln()))
}

/// Inverse Box-Cox transform. Fails when `lambda * y + 1 <= 0`.
pub fn inverse_boxcox(lambda: f64, y: f64) -> Result<f64> {
    if lambda.abs() < LAMBDA_ZERO {
        return Ok(y.exp());
    }
    let base = lambda * y + 1.0;
    if base <= 0.0 || !base.is_finite() {
        return Err(Error::Domain {
            what: "inverse box-cox base (lambda * y + 1)",
            value: base,
        });
    }
    Ok(((lambda * y).ln_1p() / lambda).exp())
}

fn validate_samples(samples: &[f64]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::TooFewSamples { got: 0, need: 1 });
    }
    for &v in samples {
        check_positive(v)?;
    }
    let first = samples[0];
    if samples.iter().all(|&v| v == first) {
        return Err(Error::DegenerateSample);
    }
    Ok(())
}

fn mean_and_pop_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (sum, count) = values
        .clone()
        .fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    let mean = sum / count as f64;
    let var = values.map(|x| (x - mean) * (x - mean)).sum::<f64>() / count as f64;
    (mean, var.sqrt())
}

/// Profile log-likelihood of the Box-Cox exponent given precomputed logs.
fn profile_log_likelihood(lambda: f64, ln_samples: &[f64], sum_ln: f64) -> f64 {
    let n = ln_samples.len() as f64;
    let (_, std) = mean_and_pop_std(ln_samples.iter().map(|&l| boxcox_ln(lambda, l)));
    let var = std * std;
    if var <= 0.0 || !var.is_finite() {
        return f64::NEG_INFINITY;
    }
    -0.5 * n * var.ln() + (lambda - 1.0) * sum_ln
}

/// Maximum-likelihood Box-Cox exponent, searched by golden section over `[-2, 2]`.
pub fn fit_boxcox_lambda(samples: &[f64]) -> Result<f64> {
    validate_samples(samples)?;
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::TooFewSamples {
            got: samples.len(),
            need: MIN_FIT_SAMPLES,
        });
    }
    let ln_samples: Vec<f64> = samples.iter().map(|v| v.ln()).collect();
    let sum_ln: f64 = ln_samples.iter().sum();
    let ll = |lambda: f64| profile_log_likelihood(lambda, &ln_samples, sum_ln);

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (LAMBDA_MIN, LAMBDA_MAX);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = ll(x1);
    let mut f2 = ll(x2);
    while hi - lo > LAMBDA_TOL {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = ll(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = ll(x2);
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Mean and population standard deviation of the Box-Cox transformed samples.
pub fn fit_moments(samples: &[f64], lambda: f64) -> Result<(f64, f64)> {
    validate_samples(samples)?;
    let (mu, sigma) = mean_and_pop_std(samples.iter().map(|&v| boxcox_ln(lambda, v.ln())));
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::DegenerateSample);
    }
    Ok((mu, sigma))
}

/// A fitted percentile transform for one campaign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxCoxFit {
    pub lambda_star: f64,
    pub mu: f64,
    pub sigma: f64,
    pub epsilon: f64,
}

impl BoxCoxFit {
    pub fn new(lambda_star: f64, mu: f64, sigma: f64, epsilon: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Domain {
                what: "box-cox sigma",
                value: sigma,
            });
        }
        if !(epsilon >= 0.0) {
            return Err(Error::Domain {
                what: "skew factor epsilon",
                value: epsilon,
            });
        }
        Ok(Self {
            lambda_star,
            mu,
            sigma,
            epsilon,
        })
    }

    /// Fits exponent and moments from quality samples.
    pub fn fit(samples: &[f64], epsilon: f64) -> Result<Self> {
        let lambda = fit_boxcox_lambda(samples)?;
        let (mu, sigma) = fit_moments(samples, lambda)?;
        Self::new(lambda, mu, sigma, epsilon)
    }

    pub fn with_epsilon(self, epsilon: f64) -> Self {
        Self { epsilon, ..self }
    }

    fn scale(&self) -> f64 {
        self.sigma * (1.0 + self.epsilon)
    }

    /// Maps a quality into percentile space.
    pub fn forward(&self, v: f64) -> Result<f64> {
        check_positive(v)?;
        Ok(self.forward_unchecked(v))
    }

    #[inline]
    pub(crate) fn forward_unchecked(&self, v: f64) -> f64 {
        normal_cdf((boxcox_ln(self.lambda_star, v.ln()) - self.mu) / self.scale())
    }

    /// Maps a percentile back into quality space. Percentiles are clamped to
    /// `[1e-6, 1 - 1e-6]` first.
    pub fn backward(&self, percentile: f64) -> Result<f64> {
        if percentile.is_nan() {
            return Err(Error::Domain {
                what: "percentile",
                value: percentile,
            });
        }
        let p = percentile.clamp(PERCENTILE_CLAMP, 1.0 - PERCENTILE_CLAMP);
        let z = normal_quantile(p)?;
        inverse_boxcox(self.lambda_star, self.mu + z * self.scale())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quality::BetaQualityModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn boxcox_examples() {
        assert!(close(boxcox(1.0, 0.4).unwrap(), -0.6, 1e-12));
        assert_eq!(boxcox(0.0, 1.0).unwrap(), 0.0);
        assert!(close(boxcox(0.5, 0.25).unwrap(), -1.0, 1e-12));
        assert!(boxcox(1.0, 0.0).is_err());
        assert!(boxcox(1.0, -0.2).is_err());
    }

    #[test]
    fn tiny_lambda_uses_log_branch() {
        assert_eq!(boxcox(1e-10, 0.3).unwrap(), 0.3f64.ln());
        assert!(close(boxcox(1e-7, 0.3).unwrap(), 0.3f64.ln(), 1e-7));
    }

    #[test]
    fn inverse_examples() {
        assert!(close(inverse_boxcox(1.0, -0.6).unwrap(), 0.4, 1e-12));
        assert_eq!(inverse_boxcox(0.0, 0.0).unwrap(), 1.0);
        assert!(close(inverse_boxcox(0.5, -1.0).unwrap(), 0.25, 1e-12));
        assert!(inverse_boxcox(0.5, -2.0).is_err());
        assert!(inverse_boxcox(-1.0, 1.0).is_err());
    }

    #[test]
    fn inverse_round_trip_relative() {
        for &lambda in &[-2.0, -1.0, -0.3, 0.0, 1e-10, 0.5, 1.0, 2.0] {
            for &v in &[1e-4, 0.01, 0.2, 0.5, 0.9, 0.999] {
                let y = boxcox(lambda, v).unwrap();
                let back = inverse_boxcox(lambda, y).unwrap();
                // lambda * y + 1 = v^lambda loses digits to cancellation when small.
                let tol = 1e-9f64.max(1e-15 / v.powf(lambda).min(1.0));
                assert!(
                    ((back - v) / v).abs() < tol,
                    "lambda={lambda} v={v} back={back}"
                );
            }
        }
    }

    /// Dense grid search, the oracle for the golden-section result.
    fn grid_lambda(samples: &[f64]) -> f64 {
        let ln: Vec<f64> = samples.iter().map(|v| v.ln()).collect();
        let sum_ln: f64 = ln.iter().sum();
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 0..=4000 {
            let lambda = -2.0 + i as f64 * 0.001;
            let n = ln.len() as f64;
            let t: Vec<f64> = ln
                .iter()
                .map(|&l| {
                    if lambda.abs() < 1e-12 {
                        l
                    } else {
                        ((lambda * l).exp() - 1.0) / lambda
                    }
                })
                .collect();
            let mean = t.iter().sum::<f64>() / n;
            let var = t.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let ll = -0.5 * n * var.ln() + (lambda - 1.0) * sum_ln;
            if ll > best.0 {
                best = (ll, lambda);
            }
        }
        best.1
    }

    #[test]
    fn lambda_near_one_for_normal_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let normal = Normal::new(0.5f64, 0.1).unwrap();
        let xs: Vec<f64> = (0..5000)
            .map(|_| normal.sample(&mut rng).clamp(1e-6, 1.0 - 1e-6))
            .collect();
        let lambda = fit_boxcox_lambda(&xs).unwrap();
        let grid = grid_lambda(&xs);
        assert!(close(lambda, grid, 2e-3), "golden {lambda} grid {grid}");
        assert!(close(lambda, 1.0, 0.3), "lambda {lambda}");
    }

    #[test]
    fn lambda_near_zero_for_lognormal_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let normal = Normal::new(-2.0f64, 0.3).unwrap();
        let xs: Vec<f64> = (0..5000)
            .map(|_| normal.sample(&mut rng).exp().clamp(1e-6, 1.0 - 1e-6))
            .collect();
        let lambda = fit_boxcox_lambda(&xs).unwrap();
        assert!(close(lambda, grid_lambda(&xs), 2e-3));
        assert!(close(lambda, 0.0, 0.3), "lambda {lambda}");
    }

    #[test]
    fn lambda_matches_grid_on_beta_data() {
        let model = BetaQualityModel::new(2.0, 30.0).unwrap();
        let xs = model.sample_n(&mut ChaCha8Rng::seed_from_u64(5), 3000);
        let lambda = fit_boxcox_lambda(&xs).unwrap();
        assert!(close(lambda, grid_lambda(&xs), 2e-3));
    }

    #[test]
    fn two_valued_sample_is_fine() {
        let xs: Vec<f64> = (0..40)
            .map(|i| if i % 2 == 0 { 0.2 } else { 0.6 })
            .collect();
        let lambda = fit_boxcox_lambda(&xs).unwrap();
        assert!((-2.0..=2.0).contains(&lambda));
    }

    #[test]
    fn lambda_fit_errors() {
        assert_eq!(fit_boxcox_lambda(&[0.3; 50]), Err(Error::DegenerateSample));
        let mut xs = vec![0.3; 49];
        xs.push(0.0);
        assert!(matches!(fit_boxcox_lambda(&xs), Err(Error::Domain { .. })));
        assert!(matches!(
            fit_boxcox_lambda(&[0.1, 0.2, 0.3]),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn moments_examples() {
        // lambda = 0.5: boxcox(v) = 2 (sqrt(v) - 1), so {0.25, 2.25} map to {-1, 1}.
        let (mu, sigma) = fit_moments(&[0.25, 2.25, 0.25, 2.25], 0.5).unwrap();
        assert!(close(mu, 0.0, 1e-12) && close(sigma, 1.0, 1e-12));
        assert_eq!(
            fit_moments(&[0.25, 0.25, 0.25], 1.0),
            Err(Error::DegenerateSample)
        );
    }

    #[test]
    fn moments_of_beta_2_2() {
        let model = BetaQualityModel::new(2.0, 2.0).unwrap();
        let xs = model.sample_n(&mut ChaCha8Rng::seed_from_u64(8), 100_000);
        let (mu, sigma) = fit_moments(&xs, 1.0).unwrap();
        assert!(close(mu, -0.5, 0.01));
        assert!(close(sigma, (1.0f64 / 20.0).sqrt(), 0.01));
    }

    #[test]
    fn forward_examples() {
        let fit = BoxCoxFit::new(1.0, -0.5, 0.1, 0.0).unwrap();
        assert!(close(fit.forward(0.5).unwrap(), 0.5, 1e-15));
        assert!(close(fit.forward(0.6).unwrap(), 0.841_344_746, 1e-6));
        let skewed = fit.with_epsilon(1.0);
        assert!(close(skewed.forward(0.5).unwrap(), 0.5, 1e-15));
        let v = skewed.forward(0.6).unwrap();
        assert!(close(v, 0.691_462_461, 1e-6));
        assert!(v < fit.forward(0.6).unwrap());
        assert!(fit.forward(0.0).is_err());
    }

    #[test]
    fn backward_examples() {
        let fit = BoxCoxFit::new(1.0, -0.5, 0.1, 0.0).unwrap();
        assert!(close(
            fit.backward(0.5).unwrap(),
            inverse_boxcox(1.0, -0.5).unwrap(),
            1e-12
        ));
        assert!(close(fit.backward(0.8413).unwrap(), 0.6, 1e-4));
        for &v in &[0.1, 0.3, 0.7] {
            let wide = BoxCoxFit::new(1.0, -0.5, 0.25, 0.1).unwrap();
            assert!(close(
                wide.backward(wide.forward(v).unwrap()).unwrap(),
                v,
                1e-6
            ));
        }
    }

    #[test]
    fn backward_clamps_boundary_percentiles() {
        let fit = BoxCoxFit::new(0.0, -2.0, 0.5, 0.0).unwrap();
        let lo = fit.backward(0.0).unwrap();
        let hi = fit.backward(1.0).unwrap();
        assert!(lo > 0.0 && hi.is_finite() && lo < hi);
        assert!(fit.backward(f64::NAN).is_err());
    }

    #[test]
    fn backward_reports_misfit_lambda() {
        // lambda = 1, mu far below -1: the inverse base goes non-positive.
        let fit = BoxCoxFit::new(1.0, -1.5, 0.1, 0.0).unwrap();
        assert!(fit.backward(0.5).is_err());
    }

    #[test]
    fn fit_rejects_bad_sigma() {
        assert!(BoxCoxFit::new(1.0, 0.0, 0.0, 0.0).is_err());
        assert!(BoxCoxFit::new(1.0, 0.0, 1.0, -0.1).is_err());
    }
}
