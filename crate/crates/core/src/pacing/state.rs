use serde::Serialize;

use super::{init_base_ptr, init_dual_percentile, init_expected_ptr, PacingHyperParams};
use crate::quality::BoxCoxFit;
use crate::{CampaignId, Error, Result};

/// Mutable pacing state of one campaign within one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignState {
    pub id: CampaignId,
    /// Total impressions `B_j`.
    pub budget: u64,
    pub remaining: u64,
    /// Uniform per-period target `B_j / T`.
    pub rho: f64,
    /// Targeted audience size in impressions.
    pub audience: f64,
    pub fit: BoxCoxFit,
    pub ptr_exp: f64,
    pub ptr_base: f64,
    /// Dual in percentile space, in `[0, 1]`.
    pub alpha_bar: f64,
    /// Dual in quality space, the bid reserve.
    pub alpha: f64,
    /// Emergency pass-through multiplier in `(0, 1]`.
    pub eptr: f64,
    pub exhausted: bool,
    pub period_cost: u64,
    pub period_ecost: f64,
}

impl CampaignState {
    /// Cold-start state: percentile dual and base PTR from the budget and
    /// audience, emergency throttle at the initial trial rate.
    pub fn new(
        id: CampaignId,
        budget: u64,
        audience: f64,
        num_periods: usize,
        fit: BoxCoxFit,
        params: &PacingHyperParams,
    ) -> Result<Self> {
        if num_periods == 0 {
            return Err(Error::config("num_periods", "must be >= 1"));
        }
        let ptr_exp = init_expected_ptr(budget as f64, audience, params.p_ub)?;
        let alpha_bar = init_dual_percentile(ptr_exp, params.p_ub);
        let rho = budget as f64 / num_periods as f64;
        let mut state = Self {
            id,
            budget,
            remaining: budget,
            rho,
            audience,
            fit,
            ptr_exp,
            ptr_base: init_base_ptr(ptr_exp, params.wr_glb),
            alpha_bar,
            alpha: 0.0,
            eptr: params.initial_trial_rate,
            exhausted: budget == 0,
            period_cost: 0,
            period_ecost: rho,
        };
        state.refresh_alpha();
        Ok(state)
    }

    /// Recomputes the quality-space dual from the percentile dual.
    ///
    /// The result is kept in `[0, 1]`. A percentile that maps below the
    /// support of the inverse power transform yields 0, one that maps above
    /// it yields 1.
    pub fn refresh_alpha(&mut self) {
        self.alpha = match self.fit.backward(self.alpha_bar) {
            Ok(a) => a.clamp(0.0, 1.0),
            Err(_) => {
                if self.fit.lambda_star > 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
        };
    }

    /// Installs a refreshed fit, keeping the campaign's skew factor.
    pub fn set_fit(&mut self, fit: BoxCoxFit) {
        self.fit = fit;
        self.refresh_alpha();
    }

    /// Records one won impression.
    pub fn charge(&mut self) {
        debug_assert!(self.remaining >= 1);
        self.remaining -= 1;
        self.period_cost += 1;
        if self.remaining == 0 {
            self.exhausted = true;
        }
    }
}
