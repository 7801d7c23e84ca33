//! Per-campaign pacing state and the control formulas of risk-constrained
//! pacing: pass-through-rate factors, emergency throttling, dual steps under
//! two Bregman divergences, and static plus adaptive dual clipping.

mod dual;
mod params;
mod ptr;
mod state;

pub use dual::{
    clip_dual, dual_step, dual_step_euclidean, dual_step_itakura, itakura_step, psi, psi_inverse,
};
pub use params::{Divergence, PacingHyperParams};
pub use ptr::{
    compute_ptr, fp, fv, init_base_ptr, init_dual_percentile, init_expected_ptr, spending_speed,
    update_eptr,
};
pub use state::CampaignState;
