use serde::{Deserialize, Serialize};

use crate::pacing::PacingHyperParams;
use crate::{CampaignId, Error, Result};

/// One arriving request with the qualities of the campaigns that recalled it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpressionRequest {
    pub request_id: u64,
    pub period: usize,
    /// Recalled campaigns in ascending id order, each with `v` in (0, 1).
    pub qualities: Vec<(CampaignId, f64)>,
}

impl ImpressionRequest {
    pub fn is_noop(&self) -> bool {
        self.qualities.is_empty()
    }
}

/// Requests grouped into consecutive periods.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ImpressionStream {
    pub periods: Vec<Vec<ImpressionRequest>>,
}

impl ImpressionStream {
    pub fn num_periods(&self) -> usize {
        self.periods.len()
    }

    pub fn num_requests(&self) -> usize {
        self.periods.iter().map(Vec::len).sum()
    }

    pub fn num_edges(&self) -> usize {
        self.requests().map(|r| r.qualities.len()).sum()
    }

    pub fn requests(&self) -> impl Iterator<Item = &ImpressionRequest> {
        self.periods.iter().flatten()
    }

    /// Largest campaign index referenced plus one.
    pub fn campaign_span(&self) -> usize {
        self.requests()
            .flat_map(|r| r.qualities.iter())
            .map(|(id, _)| id.index() + 1)
            .max()
            .unwrap_or(0)
    }

    /// Checks ordering, ranges and id consistency against `num_campaigns`.
    pub fn validate(&self, num_campaigns: usize) -> Result<()> {
        for (t, period) in self.periods.iter().enumerate() {
            for r in period {
                if r.period != t {
                    return Err(Error::Mismatch(format!(
                        "request {} is tagged period {} but stored in period {t}",
                        r.request_id, r.period
                    )));
                }
                let mut last: Option<CampaignId> = None;
                for &(id, v) in &r.qualities {
                    if id.index() >= num_campaigns {
                        return Err(Error::Mismatch(format!(
                            "request {} references campaign {id}, scenario has {num_campaigns}",
                            r.request_id
                        )));
                    }
                    if last.is_some_and(|prev| prev >= id) {
                        return Err(Error::Mismatch(format!(
                            "request {} lists campaigns out of order",
                            r.request_id
                        )));
                    }
                    if !(v > 0.0 && v < 1.0) {
                        return Err(Error::Domain {
                            what: "quality",
                            value: v,
                        });
                    }
                    last = Some(id);
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationDecision {
    pub request_id: u64,
    pub winner: Option<CampaignId>,
    /// Price premium `v - alpha` of the winner; for the layered baseline,
    /// which has no dual, the winner's quality.
    pub bid: f64,
    pub throttled: Vec<CampaignId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Dmd,
    Rcpacing,
    Smart,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Dmd, Algorithm::Rcpacing, Algorithm::Smart];

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Dmd => "dmd",
            Algorithm::Rcpacing => "rcpacing",
            Algorithm::Smart => "smart",
        }
    }

    /// Stable small integer used to key random substreams.
    pub fn stream_key(self) -> u64 {
        match self {
            Algorithm::Dmd => 1,
            Algorithm::Rcpacing => 2,
            Algorithm::Smart => 3,
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dmd" => Ok(Algorithm::Dmd),
            "rcpacing" | "rcp" => Ok(Algorithm::Rcpacing),
            "smart" => Ok(Algorithm::Smart),
            other => Err(Error::config(
                "algorithms",
                format!("unknown algorithm `{other}`"),
            )),
        }
    }
}

/// When dual mirror descent takes its gradient steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DmdUpdate {
    /// One step per period on per-request averages.
    #[default]
    PerPeriod,
    /// One step per request for every campaign, with `rho_j = B_j / N`.
    PerImpression,
}

/// Expected spend of a campaign in the coming period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// `B_j / T` every period.
    Uniform,
    /// Remaining budget spread over the remaining periods, so that an early
    /// shortfall is made up later in the run.
    #[default]
    Remaining,
}

/// Units of the percentile-space gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RcpGradient {
    /// `(target - cost) / target`, i.e. `1 - spd`.
    #[default]
    Relative,
    /// `(target - cost) / requests_in_period`, the same averaging as DMD.
    PerRequest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecordOptions {
    /// Keep one [`AllocationDecision`] per request.
    pub decisions: bool,
    /// Keep every forward-transformed quality in evaluation order.
    pub transforms: bool,
}

/// Settings shared by all allocators in one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub params: PacingHyperParams,
    pub dmd_update: DmdUpdate,
    /// Let DMD leave a request unallocated when no premium is positive.
    pub dmd_positive_premium: bool,
    pub target_mode: TargetMode,
    pub rcp_gradient: RcpGradient,
    /// Quality layers of the throttling baseline.
    pub smart_layers: usize,
    #[serde(skip)]
    pub record: RecordOptions,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            params: PacingHyperParams::default(),
            dmd_update: DmdUpdate::default(),
            dmd_positive_premium: false,
            target_mode: TargetMode::default(),
            rcp_gradient: RcpGradient::default(),
            smart_layers: 10,
            record: RecordOptions::default(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.smart_layers == 0 {
            return Err(Error::config("smart_layers", "must be >= 1"));
        }
        Ok(())
    }
}

/// Per-period controller state of one campaign, recorded after the period's
/// update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualSnapshot {
    pub alpha_bar: f64,
    pub alpha: f64,
    pub eptr: f64,
}

/// Outcome of one allocator run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryTrace {
    pub algorithm: Algorithm,
    pub num_campaigns: usize,
    pub num_periods: usize,
    pub num_requests: usize,
    /// Budgets the run started from.
    pub budgets: Vec<u64>,
    /// Wins, indexed `campaign * num_periods + period`.
    pub wins: Vec<u64>,
    /// Sum of won qualities, same layout as `wins`.
    pub quality: Vec<f64>,
    pub remaining: Vec<u64>,
    /// Snapshots indexed like `wins`; empty for allocators without duals.
    pub snapshots: Vec<DualSnapshot>,
    pub decisions: Vec<AllocationDecision>,
    pub transforms: Vec<f64>,
}

impl DeliveryTrace {
    pub(crate) fn new(algorithm: Algorithm, budgets: Vec<u64>, stream: &ImpressionStream) -> Self {
        let m = budgets.len();
        let num_periods = stream.num_periods();
        Self {
            algorithm,
            num_campaigns: m,
            num_periods,
            num_requests: stream.num_requests(),
            remaining: budgets.clone(),
            budgets,
            wins: vec![0; m * num_periods],
            quality: vec![0.0; m * num_periods],
            snapshots: Vec::new(),
            decisions: Vec::new(),
            transforms: Vec::new(),
        }
    }

    #[inline]
    pub(crate) fn cell(&self, campaign: usize, period: usize) -> usize {
        campaign * self.num_periods + period
    }

    pub(crate) fn record_win(&mut self, campaign: usize, period: usize, v: f64) {
        let c = self.cell(campaign, period);
        self.wins[c] += 1;
        self.quality[c] += v;
        self.remaining[campaign] -= 1;
    }

    pub fn wins_of(&self, campaign: usize) -> &[u64] {
        let s = campaign * self.num_periods;
        &self.wins[s..s + self.num_periods]
    }

    pub fn total_wins(&self) -> u64 {
        self.wins.iter().sum()
    }

    pub fn total_quality(&self) -> f64 {
        self.quality.iter().sum()
    }

    pub fn snapshot(&self, campaign: usize, period: usize) -> Option<&DualSnapshot> {
        self.snapshots.get(self.cell(campaign, period))
    }
}
