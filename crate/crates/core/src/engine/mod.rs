//! Online allocators: dual mirror descent, RCPacing and a layered
//! probabilistic-throttling baseline.
//!
//! All three consume an [`ImpressionStream`] period by period and return a
//! [`DeliveryTrace`]. A campaign never wins more impressions than its budget.

mod dmd;
mod fits;
mod rcpacing;
mod smart;
mod types;

pub use dmd::{dmd_decide, dmd_period_update, run_dmd, DmdCampaign};
pub use fits::{FitSchedule, FitSource, FIT_SAMPLE_CAP, FIT_WINDOW};
pub use rcpacing::{
    initial_states, rcp_decide, rcp_period_update, run_rcpacing, run_rcpacing_from,
};
pub use smart::{run_smart_baseline, LayeredCampaign};
pub use types::{
    Algorithm, AllocationDecision, DeliveryTrace, DmdUpdate, DualSnapshot, EngineConfig,
    ImpressionRequest, ImpressionStream, RcpGradient, RecordOptions, TargetMode,
};

use rand::Rng;

use crate::sim::CampaignSpec;
use crate::Result;

/// Runs one allocator. `fits` is ignored by dual mirror descent.
pub fn run_algorithm<R: Rng + ?Sized>(
    algorithm: Algorithm,
    stream: &ImpressionStream,
    specs: &[CampaignSpec],
    fits: &FitSchedule,
    config: &EngineConfig,
    rng: &mut R,
) -> Result<DeliveryTrace> {
    match algorithm {
        Algorithm::Dmd => run_dmd(stream, specs, config),
        Algorithm::Rcpacing => run_rcpacing(stream, specs, fits, config, rng),
        Algorithm::Smart => run_smart_baseline(stream, specs, fits, config, rng),
    }
}
