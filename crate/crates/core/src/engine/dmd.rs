use super::{
    Algorithm, AllocationDecision, DeliveryTrace, DmdUpdate, DualSnapshot, EngineConfig,
    ImpressionRequest, ImpressionStream, TargetMode,
};
use crate::sim::CampaignSpec;
use crate::{CampaignId, Result};

/// Dual mirror descent state of one campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct DmdCampaign {
    pub id: CampaignId,
    pub budget: u64,
    pub remaining: u64,
    /// Quality-space dual, kept non-negative.
    pub alpha: f64,
    /// Expected wins in the current period.
    pub target: f64,
}

impl DmdCampaign {
    pub fn new(id: CampaignId, budget: u64, num_periods: usize) -> Self {
        Self {
            id,
            budget,
            remaining: budget,
            alpha: 0.0,
            target: budget as f64 / num_periods.max(1) as f64,
        }
    }
}

/// Allocates `request` to the campaign with the largest premium `v - alpha`
/// among those with budget left. Ties go to the lowest id.
///
/// Without `positive_premium` a negative premium still wins when it is the
/// largest. With it, the empty allocation is also a candidate, so a request
/// whose premiums are all non-positive stays unallocated.
pub fn dmd_decide(
    request: &ImpressionRequest,
    campaigns: &mut [DmdCampaign],
    positive_premium: bool,
) -> AllocationDecision {
    let mut best: Option<(usize, f64)> = None;
    for &(id, v) in &request.qualities {
        let c = &campaigns[id.index()];
        if c.remaining < 1 {
            continue;
        }
        let bid = v - c.alpha;
        if positive_premium && bid <= 0.0 {
            continue;
        }
        if best.is_none_or(|(_, b)| bid > b) {
            best = Some((id.index(), bid));
        }
    }
    if let Some((j, _)) = best {
        campaigns[j].remaining -= 1;
    }
    AllocationDecision {
        request_id: request.request_id,
        winner: best.map(|(j, _)| campaigns[j].id),
        bid: best.map_or(0.0, |(_, b)| b),
        throttled: Vec::new(),
    }
}

/// One mirror-descent step under the squared reference function:
/// `alpha <- max(0, alpha - eta * (rho_bar - x_bar))`, where both the target
/// and the realized spend are per-request averages over the period.
pub fn dmd_period_update(
    campaigns: &mut [DmdCampaign],
    period_wins: &[u64],
    requests_in_period: usize,
    average_requests: f64,
    eta: f64,
) {
    if requests_in_period == 0 || average_requests <= 0.0 {
        return;
    }
    for (c, &wins) in campaigns.iter_mut().zip(period_wins) {
        let rho_bar = c.target / average_requests;
        let x_bar = wins as f64 / requests_in_period as f64;
        c.alpha = (c.alpha - eta * (rho_bar - x_bar)).max(0.0);
    }
}

/// Per-request step for every campaign, `rho_j = B_j / N`.
fn dmd_impression_update(
    campaigns: &mut [DmdCampaign],
    rho: &[f64],
    winner: Option<CampaignId>,
    eta: f64,
) {
    for (j, c) in campaigns.iter_mut().enumerate() {
        let x = if winner.is_some_and(|w| w.index() == j) {
            1.0
        } else {
            0.0
        };
        c.alpha = (c.alpha - eta * (rho[j] - x)).max(0.0);
    }
}

pub(crate) fn period_target(
    mode: TargetMode,
    budget: u64,
    remaining: u64,
    t: usize,
    t_count: usize,
) -> f64 {
    match mode {
        TargetMode::Uniform => budget as f64 / t_count as f64,
        TargetMode::Remaining => remaining as f64 / (t_count - t) as f64,
    }
}

/// Runs dual mirror descent over the whole stream.
pub fn run_dmd(
    stream: &ImpressionStream,
    specs: &[CampaignSpec],
    config: &EngineConfig,
) -> Result<DeliveryTrace> {
    config.validate()?;
    stream.validate(specs.len())?;
    let t_count = stream.num_periods();
    let eta = config.params.eta;
    let mut campaigns: Vec<DmdCampaign> = specs
        .iter()
        .map(|s| DmdCampaign::new(s.id, s.budget, t_count))
        .collect();
    let mut trace = DeliveryTrace::new(
        Algorithm::Dmd,
        specs.iter().map(|s| s.budget).collect(),
        stream,
    );
    let total_requests = stream.num_requests();
    let average_requests = total_requests as f64 / t_count.max(1) as f64;
    let rho: Vec<f64> = specs
        .iter()
        .map(|s| s.budget as f64 / total_requests.max(1) as f64)
        .collect();
    let m = specs.len();
    let mut period_wins = vec![0u64; m];
    let mut snapshots = vec![
        DualSnapshot {
            alpha_bar: 0.0,
            alpha: 0.0,
            eptr: 1.0
        };
        m * t_count
    ];

    for (t, requests) in stream.periods.iter().enumerate() {
        for c in campaigns.iter_mut() {
            c.target = period_target(config.target_mode, c.budget, c.remaining, t, t_count);
        }
        period_wins.iter_mut().for_each(|w| *w = 0);
        for request in requests {
            let decision = dmd_decide(request, &mut campaigns, config.dmd_positive_premium);
            if let Some(w) = decision.winner {
                let v = request
                    .qualities
                    .iter()
                    .find(|(id, _)| *id == w)
                    .map(|&(_, v)| v)
                    .expect("winner was recalled");
                trace.record_win(w.index(), t, v);
                period_wins[w.index()] += 1;
            }
            if config.dmd_update == DmdUpdate::PerImpression {
                dmd_impression_update(&mut campaigns, &rho, decision.winner, eta);
            }
            if config.record.decisions {
                trace.decisions.push(decision);
            }
        }
        if config.dmd_update == DmdUpdate::PerPeriod {
            dmd_period_update(
                &mut campaigns,
                &period_wins,
                requests.len(),
                average_requests,
                eta,
            );
        }
        for (j, c) in campaigns.iter().enumerate() {
            snapshots[trace.cell(j, t)].alpha = c.alpha;
        }
    }
    trace.snapshots = snapshots;
    Ok(trace)
}
