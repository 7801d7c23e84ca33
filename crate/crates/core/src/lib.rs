//! Smooth budget pacing for guaranteed-display campaigns.
//!
//! The crate simulates three online allocators over a stream of impression
//! requests: dual mirror descent ([`engine::run_dmd`]), risk-constrained
//! pacing in percentile space ([`engine::run_rcpacing`]) and a layered
//! probabilistic-throttling baseline ([`engine::run_smart_baseline`]).
//! Runs produce a [`engine::DeliveryTrace`] which the [`metrics`] module turns
//! into delivery rate, unsmoothness and average CTR, and, for small
//! instances, regret against the exact hindsight optimum.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod metrics;
pub mod pacing;
pub mod quality;
pub mod report;
pub mod sim;
pub mod validate;

pub use error::{Error, Result};

/// Identifier of a campaign. Campaign ids are dense indices `0..M` within one
/// scenario; iteration order over campaigns is always ascending id.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize,
)]
#[serde(transparent)]
pub struct CampaignId(pub u32);

impl CampaignId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for CampaignId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}
