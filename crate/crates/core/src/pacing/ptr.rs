use crate::{Error, Result};

use super::{CampaignState, PacingHyperParams};

/// Expected pass-through rate ignoring competition:
/// `budget / ((1 - p_ub) * audience)`. May exceed one.
pub fn init_expected_ptr(budget: f64, audience: f64, p_ub: f64) -> Result<f64> {
    if !(budget > 0.0) {
        return Err(Error::Domain {
            what: "budget",
            value: budget,
        });
    }
    if !(audience > 0.0) {
        return Err(Error::Domain {
            what: "audience",
            value: audience,
        });
    }
    if !(p_ub > 0.0 && p_ub < 1.0) {
        return Err(Error::Domain {
            what: "p_ub",
            value: p_ub,
        });
    }
    Ok(budget / ((1.0 - p_ub) * audience))
}

/// Initial percentile dual: `p_ub` when the top band suffices, lower otherwise.
pub fn init_dual_percentile(ptr_exp: f64, p_ub: f64) -> f64 {
    if ptr_exp <= 1.0 {
        p_ub
    } else {
        (1.0 - (1.0 - p_ub) * ptr_exp).clamp(0.0, 1.0)
    }
}

pub fn init_base_ptr(ptr_exp: f64, wr_glb: f64) -> f64 {
    (ptr_exp / wr_glb).min(1.0)
}

pub(crate) fn fp_with_bases(alpha_bar: f64, p_ub: f64, low_base: f64, high_base: f64) -> f64 {
    if alpha_bar <= p_ub {
        low_base.powf((p_ub - alpha_bar) / p_ub)
    } else {
        high_base.powf((p_ub - alpha_bar) / (p_ub - 1.0))
    }
}

/// Percentile factor: grows slowly below `p_ub` (up to 50) and decays fast
/// above it (down to 0.2 at one).
pub fn fp(alpha_bar: f64, p_ub: f64) -> f64 {
    fp_with_bases(alpha_bar, p_ub, 50.0, 0.2)
}

/// Quality factor `k (v_bar - alpha_bar) + 1`, floored at zero.
pub fn fv(alpha_bar: f64, v_bar: f64, slope_k: f64) -> f64 {
    (slope_k * (v_bar - alpha_bar) + 1.0).max(0.0)
}

/// Final pass-through rate for one (request, campaign) pair.
pub fn compute_ptr(state: &CampaignState, params: &PacingHyperParams, v_bar: f64) -> f64 {
    let raw =
        state.ptr_base * params.fp(state.alpha_bar) * fv(state.alpha_bar, v_bar, params.slope_k);
    (raw.min(1.0) * state.eptr).clamp(0.0, 1.0)
}

/// Ratio of actual to expected period spend.
pub fn spending_speed(period_cost: f64, period_ecost: f64) -> Result<f64> {
    if !(period_ecost > 0.0) {
        return Err(Error::ZeroExpectedCost);
    }
    Ok(period_cost / period_ecost)
}

/// Proportional emergency-throttle update, at most doubling per call.
pub fn update_eptr(eptr: f64, spd: f64, cap: f64) -> f64 {
    let factor = if spd > 0.0 { cap.min(cap / spd) } else { cap };
    (eptr * factor).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quality::BoxCoxFit;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn expected_ptr_examples() {
        assert!(close(
            init_expected_ptr(1000.0, 100_000.0, 0.9).unwrap(),
            0.1,
            1e-12
        ));
        assert!(close(
            init_expected_ptr(10_000.0, 100_000.0, 0.9).unwrap(),
            1.0,
            1e-12
        ));
        assert!(close(
            init_expected_ptr(20_000.0, 100_000.0, 0.9).unwrap(),
            2.0,
            1e-12
        ));
        assert!(init_expected_ptr(0.0, 1.0, 0.9).is_err());
        assert!(init_expected_ptr(1.0, 0.0, 0.9).is_err());
        assert!(init_expected_ptr(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn dual_percentile_examples() {
        assert_eq!(init_dual_percentile(0.1, 0.9), 0.9);
        assert!(close(init_dual_percentile(2.0, 0.9), 0.8, 1e-12));
        assert_eq!(init_dual_percentile(12.0, 0.9), 0.0);
    }

    #[test]
    fn base_ptr_examples() {
        assert!(close(init_base_ptr(0.1, 0.15), 0.6667, 1e-4));
        assert_eq!(init_base_ptr(0.2, 0.15), 1.0);
        assert_eq!(init_base_ptr(0.15, 1.0), 0.15);
    }

    #[test]
    fn fp_examples_and_continuity() {
        assert_eq!(fp(0.9, 0.9), 1.0);
        assert!(close(fp(0.0, 0.9), 50.0, 1e-12));
        assert!(close(fp(1.0, 0.9), 0.2, 1e-12));
        assert!((fp(0.9 - 1e-9, 0.9) - fp(0.9 + 1e-9, 0.9)).abs() <= 1e-6);
        for i in 0..=1000 {
            let a = i as f64 / 1000.0;
            let f = fp(a, 0.9);
            assert!((0.2 - 1e-12..=50.0 + 1e-12).contains(&f));
        }
    }

    #[test]
    fn fv_examples() {
        assert_eq!(fv(0.4, 0.4, 7.0), 1.0);
        assert!(close(fv(0.5, 0.6, 10.0), 2.0, 1e-12));
        assert_eq!(fv(0.5, 0.3, 10.0), 0.0);
    }

    fn state(ptr_base: f64, alpha_bar: f64, eptr: f64) -> CampaignState {
        let fit = BoxCoxFit::new(1.0, -0.9, 0.05, 0.0).unwrap();
        let mut s = CampaignState::new(
            crate::CampaignId(0),
            100,
            10_000.0,
            10,
            fit,
            &PacingHyperParams::default(),
        )
        .unwrap();
        s.ptr_base = ptr_base;
        s.alpha_bar = alpha_bar;
        s.eptr = eptr;
        s
    }

    #[test]
    fn compute_ptr_examples() {
        let params = PacingHyperParams::default();
        assert_eq!(compute_ptr(&state(1.0, 0.9, 1.0), &params, 0.9), 1.0);
        assert_eq!(compute_ptr(&state(0.667, 0.9, 1.0), &params, 0.95), 1.0);
        assert_eq!(compute_ptr(&state(0.667, 0.9, 0.5), &params, 0.95), 0.5);
    }

    #[test]
    fn compute_ptr_is_a_probability_and_monotone_in_quality() {
        let params = PacingHyperParams::default();
        for &(pb, ab, ep) in &[
            (0.05, 0.95, 1.0),
            (0.3, 0.5, 0.2),
            (1.0, 0.0, 1.0),
            (0.01, 0.2, 0.7),
        ] {
            let s = state(pb, ab, ep);
            let mut last = 0.0;
            for i in 0..=100 {
                let p = compute_ptr(&s, &params, i as f64 / 100.0);
                assert!((0.0..=1.0).contains(&p));
                assert!(p >= last);
                last = p;
            }
        }
    }

    #[test]
    fn spending_speed_examples() {
        assert_eq!(spending_speed(100.0, 100.0).unwrap(), 1.0);
        assert_eq!(spending_speed(300.0, 100.0).unwrap(), 3.0);
        assert_eq!(spending_speed(0.0, 100.0).unwrap(), 0.0);
        assert_eq!(spending_speed(5.0, 0.0), Err(Error::ZeroExpectedCost));
    }

    #[test]
    fn eptr_examples() {
        assert!(close(update_eptr(1.0, 4.0, 2.0), 0.5, 1e-12));
        assert_eq!(update_eptr(1.0, 1.0, 2.0), 1.0);
        assert!(close(update_eptr(0.25, 0.5, 2.0), 0.5, 1e-12));
        assert!(close(update_eptr(0.25, 0.0, 2.0), 0.5, 1e-12));
    }

    #[test]
    fn eptr_never_exceeds_one_or_more_than_doubles() {
        for i in 1..=50 {
            let e = i as f64 / 50.0;
            for j in 0..=80 {
                let spd = j as f64 / 10.0;
                let next = update_eptr(e, spd, 2.0);
                assert!(next <= 1.0 && next <= 2.0 * e + 1e-15);
            }
        }
    }
}
