//! Impression-quality modelling and the parametric percentile transform.
//!
//! Qualities are modelled per campaign as `Beta(m, n)` draws. The percentile
//! transform normalizes a campaign's qualities with a Box-Cox power transform
//! and then maps them through the standard normal CDF, so that dual variables
//! can be adjusted in a uniform `[0, 1]` percentile space.

mod boxcox;
mod normal;
pub mod quadrature;
pub mod theory;

pub use boxcox::{
    boxcox, fit_boxcox_lambda, fit_moments, inverse_boxcox, BoxCoxFit, MIN_FIT_SAMPLES,
};
pub use normal::{normal_cdf, normal_pdf, normal_quantile};

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Smallest quality a sampler will return; keeps draws strictly inside (0, 1).
const QUALITY_FLOOR: f64 = 1e-12;

/// Beta-distributed impression quality with shape parameters `m, n >= 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBeta", into = "RawBeta")]
pub struct BetaQualityModel {
    m: f64,
    n: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBeta {
    m: f64,
    n: f64,
}

impl TryFrom<RawBeta> for BetaQualityModel {
    type Error = Error;
    fn try_from(raw: RawBeta) -> Result<Self> {
        BetaQualityModel::new(raw.m, raw.n)
    }
}

impl From<BetaQualityModel> for RawBeta {
    fn from(model: BetaQualityModel) -> Self {
        RawBeta {
            m: model.m,
            n: model.n,
        }
    }
}

impl BetaQualityModel {
    pub fn new(m: f64, n: f64) -> Result<Self> {
        if !(m.is_finite() && n.is_finite()) || m < 2.0 || n < 2.0 {
            return Err(Error::InvalidModel(format!(
                "shape parameters must satisfy m >= 2 and n >= 2, got m={m}, n={n}"
            )));
        }
        Ok(Self { m, n })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.m / (self.m + self.n)
    }

    pub fn variance(&self) -> f64 {
        let s = self.m + self.n;
        self.m * self.n / (s * s * (s + 1.0))
    }

    /// Returns a copy with both shapes multiplied, clamped back to the
    /// admissible region. Used to inject distribution drift.
    pub fn scaled(&self, m_scale: f64, n_scale: f64) -> Self {
        Self {
            m: (self.m * m_scale).max(2.0),
            n: (self.n * n_scale).max(2.0),
        }
    }

    /// One draw from `Beta(m, n)`, strictly inside (0, 1).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // Shapes were validated at construction, so Beta::new cannot fail.
        let dist = Beta::new(self.m, self.n).expect("validated beta shapes");
        dist.sample(rng).clamp(QUALITY_FLOOR, 1.0 - QUALITY_FLOOR)
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        let dist = Beta::new(self.m, self.n).expect("validated beta shapes");
        (0..count)
            .map(|_| dist.sample(rng).clamp(QUALITY_FLOOR, 1.0 - QUALITY_FLOOR))
            .collect()
    }
}
