use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Reference function used for the dual mirror-descent step in percentile space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Divergence {
    /// `h(a) = a^2`: plain gradient step.
    Euclidean,
    /// `h(a) = -ln(1.5 - a)`: steps shrink as the dual approaches one.
    Itakura,
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Divergence::Euclidean => "euclidean",
            Divergence::Itakura => "itakura",
        })
    }
}

impl std::str::FromStr for Divergence {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Divergence::Euclidean),
            "itakura" => Ok(Divergence::Itakura),
            other => Err(Error::config(
                "divergence",
                format!("unknown divergence `{other}`"),
            )),
        }
    }
}

/// Hyper-parameters of the pacing controller. Defaults are the tuned values
/// used for the offline evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PacingHyperParams {
    /// Skew factor pulling the percentile transform toward the middle.
    pub epsilon: f64,
    /// Dual step size.
    pub eta: f64,
    /// Static clip radius on each dual update, in percentile units.
    pub alpha_hat: f64,
    /// Safe upper bound on the dual percentile.
    pub p_ub: f64,
    /// Assumed global win rate used to derive the base pass-through rate.
    pub wr_glb: f64,
    /// Slope of the quality-dependent pass-through factor.
    pub slope_k: f64,
    pub divergence: Divergence,
    pub adaptive_clip_enabled: bool,
    /// Safe upper spending-speed ratio for the emergency throttle.
    pub eptr_speed_cap: f64,
    /// Emergency throttle value at cold start.
    pub initial_trial_rate: f64,
    /// Base of the percentile factor below `p_ub`.
    pub fp_low_base: f64,
    /// Base of the percentile factor above `p_ub`.
    pub fp_high_base: f64,
}

impl Default for PacingHyperParams {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            eta: 0.2,
            alpha_hat: 0.05,
            p_ub: 0.9,
            wr_glb: 0.15,
            slope_k: 10.0,
            divergence: Divergence::Itakura,
            adaptive_clip_enabled: true,
            eptr_speed_cap: 2.0,
            initial_trial_rate: 0.1,
            fp_low_base: 50.0,
            fp_high_base: 0.2,
        }
    }
}

impl PacingHyperParams {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(field, reason))
            }
        };
        check(
            self.epsilon >= 0.0 && self.epsilon.is_finite(),
            "epsilon",
            "must be >= 0",
        )?;
        check(self.eta > 0.0 && self.eta.is_finite(), "eta", "must be > 0")?;
        check(
            self.alpha_hat > 0.0 && self.alpha_hat < 1.0,
            "alpha_hat",
            "must lie in (0, 1)",
        )?;
        check(
            self.p_ub > 0.0 && self.p_ub < 1.0,
            "p_ub",
            "must lie in (0, 1)",
        )?;
        check(
            self.wr_glb > 0.0 && self.wr_glb <= 1.0,
            "wr_glb",
            "must lie in (0, 1]",
        )?;
        check(
            self.slope_k >= 0.0 && self.slope_k.is_finite(),
            "slope_k",
            "must be >= 0",
        )?;
        check(self.eptr_speed_cap > 0.0, "eptr_speed_cap", "must be > 0")?;
        check(
            self.initial_trial_rate > 0.0 && self.initial_trial_rate <= 1.0,
            "initial_trial_rate",
            "must lie in (0, 1]",
        )?;
        check(self.fp_low_base >= 1.0, "fp_low_base", "must be >= 1")?;
        check(
            self.fp_high_base > 0.0 && self.fp_high_base <= 1.0,
            "fp_high_base",
            "must lie in (0, 1]",
        )?;
        Ok(())
    }

    /// Percentile factor with this parameter set's bases.
    pub fn fp(&self, alpha_bar: f64) -> f64 {
        super::ptr::fp_with_bases(alpha_bar, self.p_ub, self.fp_low_base, self.fp_high_base)
    }
}
