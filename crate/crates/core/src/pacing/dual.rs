use super::{Divergence, PacingHyperParams};

/// Floor on the spending speed used by the adaptive clip bound.
const SPD_FLOOR: f64 = 1e-3;
const BISECTION_STEPS: usize = 60;
/// Largest admissible `eta * g * (1.5 - alpha_bar)` in the Itakura step.
const ITAKURA_SATURATION: f64 = 0.5;

/// Squared-loss step `alpha_bar - eta * g`, kept in `[0, 1]`.
pub fn dual_step_euclidean(alpha_bar: f64, g_tilde: f64, eta: f64) -> f64 {
    (alpha_bar - eta * g_tilde).clamp(0.0, 1.0)
}

/// Signed, unclamped displacement of the Itakura-Saito step.
///
/// The step requires `eta * g * (1.5 - alpha_bar) < 1`. The product is
/// saturated at 0.5, which keeps the sign of the gradient and makes the step
/// magnitude a continuous, strictly decreasing function of `alpha_bar`.
pub fn itakura_step(alpha_bar: f64, g_tilde: f64, eta: f64) -> f64 {
    let gap = 1.5 - alpha_bar;
    let scaled = (eta * g_tilde).min(ITAKURA_SATURATION / gap);
    -(gap * gap) / (1.0 - scaled * gap) * scaled
}

/// Step under `h(a) = -ln(1.5 - a)`, kept in `[0, 1]`.
pub fn dual_step_itakura(alpha_bar: f64, g_tilde: f64, eta: f64) -> f64 {
    (alpha_bar + itakura_step(alpha_bar, g_tilde, eta)).clamp(0.0, 1.0)
}

pub fn dual_step(divergence: Divergence, alpha_bar: f64, g_tilde: f64, eta: f64) -> f64 {
    match divergence {
        Divergence::Euclidean => dual_step_euclidean(alpha_bar, g_tilde, eta),
        Divergence::Itakura => dual_step_itakura(alpha_bar, g_tilde, eta),
    }
}

/// Expected throttled participation at percentile dual `alpha_bar`:
///
/// `psi(a) = ∫_a^1 min{1, ptr_base * fp(a) * (k (x - a) + 1)} dx`,
///
/// the mass of percentiles above the dual weighted by their pass-through rate
/// before the emergency throttle. Evaluated in closed form: the integrand is
/// linear in `x` until it hits the cap at one.
pub fn psi(alpha_bar: f64, ptr_base: f64, params: &PacingHyperParams) -> f64 {
    let a = alpha_bar.clamp(0.0, 1.0);
    let len = 1.0 - a;
    if len <= 0.0 {
        return 0.0;
    }
    let c = ptr_base * params.fp(a);
    if c >= 1.0 {
        return len;
    }
    if c <= 0.0 {
        return 0.0;
    }
    let k = params.slope_k;
    if k <= 0.0 {
        return c * len;
    }
    // Offset above the dual where c (k u + 1) reaches one.
    let cap = (1.0 / c - 1.0) / k;
    if cap >= len {
        c * (len + 0.5 * k * len * len)
    } else {
        c * (cap + 0.5 * k * cap * cap) + (len - cap)
    }
}

/// Right inverse of [`psi`] by bisection; `psi` is strictly decreasing.
pub fn psi_inverse(target: f64, ptr_base: f64, params: &PacingHyperParams) -> f64 {
    if target <= 0.0 {
        return 1.0;
    }
    if target >= psi(0.0, ptr_base, params) {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if psi(mid, ptr_base, params) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Clips a proposed dual update.
///
/// With a non-negative gradient (underspend) the dual may fall by at most
/// `alpha_hat` and, when adaptive clipping is on, by no more than needed to
/// restore the spending speed to one. With a negative gradient the same
/// bounds apply from above.
pub fn clip_dual(
    alpha_bar: f64,
    alpha_tilde: f64,
    g_tilde: f64,
    spd: f64,
    ptr_base: f64,
    params: &PacingHyperParams,
) -> f64 {
    let current_psi = psi(alpha_bar, ptr_base, params);
    let adaptive = if params.adaptive_clip_enabled && current_psi > 0.0 {
        Some(psi_inverse(
            current_psi / spd.max(SPD_FLOOR),
            ptr_base,
            params,
        ))
    } else {
        None
    };
    let next = if g_tilde >= 0.0 {
        let bound = alpha_tilde.max(alpha_bar - params.alpha_hat);
        adaptive.map_or(bound, |b| bound.max(b))
    } else {
        let bound = alpha_tilde.min(alpha_bar + params.alpha_hat);
        adaptive.map_or(bound, |b| bound.min(b))
    };
    next.clamp(0.0, 1.0)
}
