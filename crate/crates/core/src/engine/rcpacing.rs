use rand::Rng;

use super::dmd::period_target;
use super::{
    Algorithm, AllocationDecision, DeliveryTrace, DualSnapshot, EngineConfig, FitSchedule,
    ImpressionRequest, ImpressionStream, RcpGradient,
};
use crate::pacing::{
    clip_dual, compute_ptr, dual_step, spending_speed, update_eptr, CampaignState,
    PacingHyperParams,
};
use crate::sim::CampaignSpec;
use crate::{Error, Result};

/// Throttles and auctions one request.
///
/// One uniform draw is consumed per recalled campaign, in ascending id order,
/// whether or not the campaign can still spend. A campaign participates when
/// its draw falls below its pass-through rate; among participants with a
/// positive premium `v - alpha` the largest wins, ties going to the lowest id.
/// Forward-transformed qualities are appended to `transforms` when given.
pub fn rcp_decide<R: Rng + ?Sized>(
    request: &ImpressionRequest,
    states: &mut [CampaignState],
    params: &PacingHyperParams,
    rng: &mut R,
    mut transforms: Option<&mut Vec<f64>>,
) -> AllocationDecision {
    let mut best: Option<(usize, f64)> = None;
    let mut throttled = Vec::new();
    for &(id, v) in &request.qualities {
        let draw: f64 = rng.random();
        let state = &states[id.index()];
        if state.exhausted {
            continue;
        }
        let v_bar = state.fit.forward_unchecked(v);
        if let Some(log) = transforms.as_deref_mut() {
            log.push(v_bar);
        }
        if draw >= compute_ptr(state, params, v_bar) {
            throttled.push(id);
            continue;
        }
        let bid = v - state.alpha;
        if bid > 0.0 && best.is_none_or(|(_, b)| bid > b) {
            best = Some((id.index(), bid));
        }
    }
    if let Some((j, _)) = best {
        states[j].charge();
    }
    AllocationDecision {
        request_id: request.request_id,
        winner: best.map(|(j, _)| states[j].id),
        bid: best.map_or(0.0, |(_, b)| b),
        throttled,
    }
}

/// End-of-period controller update for every campaign that can still spend.
///
/// The gradient is `1 - spd` in [`RcpGradient::Relative`] units, or the
/// per-request gap between target and spend otherwise. The percentile dual
/// takes a mirror step, is clipped, and the quality-space dual is refreshed;
/// the emergency throttle then reacts to the spending speed. A campaign with
/// neither a target nor spend is left untouched.
pub fn rcp_period_update(
    states: &mut [CampaignState],
    params: &PacingHyperParams,
    gradient: RcpGradient,
    requests_in_period: usize,
    average_requests: f64,
) -> Result<()> {
    for s in states.iter_mut().filter(|s| !s.exhausted) {
        if s.period_ecost <= 0.0 {
            if s.period_cost == 0 {
                continue;
            }
            return Err(Error::ZeroExpectedCost);
        }
        let spd = spending_speed(s.period_cost as f64, s.period_ecost)?;
        let g = match gradient {
            RcpGradient::Relative => 1.0 - spd,
            RcpGradient::PerRequest => {
                if requests_in_period == 0 {
                    continue;
                }
                s.period_ecost / average_requests - s.period_cost as f64 / requests_in_period as f64
            }
        };
        let proposal = dual_step(params.divergence, s.alpha_bar, g, params.eta);
        s.alpha_bar = clip_dual(s.alpha_bar, proposal, g, spd, s.ptr_base, params);
        s.eptr = update_eptr(s.eptr, spd, params.eptr_speed_cap);
        s.refresh_alpha();
    }
    Ok(())
}

/// Builds cold-start states, audience `recall_prob * total_requests`.
pub fn initial_states(
    specs: &[CampaignSpec],
    fits: &FitSchedule,
    total_requests: usize,
    num_periods: usize,
    params: &PacingHyperParams,
) -> Result<Vec<CampaignState>> {
    specs
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            if spec.budget == 0 {
                return Err(Error::ZeroBudget);
            }
            let fit = fits.fit(0, j).with_epsilon(params.epsilon);
            let audience = spec.recall_prob * total_requests as f64;
            CampaignState::new(spec.id, spec.budget, audience, num_periods, fit, params)
        })
        .collect()
}

/// Runs RCPacing over the whole stream with one fit per period.
pub fn run_rcpacing<R: Rng + ?Sized>(
    stream: &ImpressionStream,
    specs: &[CampaignSpec],
    fits: &FitSchedule,
    config: &EngineConfig,
    rng: &mut R,
) -> Result<DeliveryTrace> {
    let t_count = stream.num_periods();
    let mut states = initial_states(specs, fits, stream.num_requests(), t_count, &config.params)?;
    run_rcpacing_from(stream, &mut states, fits, config, rng)
}

/// As [`run_rcpacing`] but starting from caller-built states, which lets
/// tests pin the initial duals and throttles.
pub fn run_rcpacing_from<R: Rng + ?Sized>(
    stream: &ImpressionStream,
    states: &mut [CampaignState],
    fits: &FitSchedule,
    config: &EngineConfig,
    rng: &mut R,
) -> Result<DeliveryTrace> {
    config.validate()?;
    stream.validate(states.len())?;
    let t_count = stream.num_periods();
    if fits.num_campaigns() != states.len() || fits.num_periods() < t_count {
        return Err(Error::Mismatch(format!(
            "fit schedule covers {} campaigns x {} periods, run needs {} x {t_count}",
            fits.num_campaigns(),
            fits.num_periods(),
            states.len()
        )));
    }
    let params = &config.params;
    let m = states.len();
    let mut trace = DeliveryTrace::new(
        Algorithm::Rcpacing,
        states.iter().map(|s| s.budget).collect(),
        stream,
    );
    let average_requests = stream.num_requests() as f64 / t_count.max(1) as f64;
    let mut snapshots = Vec::with_capacity(m * t_count);
    snapshots.resize(
        m * t_count,
        DualSnapshot {
            alpha_bar: 0.0,
            alpha: 0.0,
            eptr: 0.0,
        },
    );
    let mut transforms = Vec::new();

    for (t, requests) in stream.periods.iter().enumerate() {
        for (j, s) in states.iter_mut().enumerate() {
            if t > 0 {
                s.set_fit(fits.fit(t, j).with_epsilon(params.epsilon));
            }
            s.period_cost = 0;
            s.period_ecost = period_target(config.target_mode, s.budget, s.remaining, t, t_count);
        }
        for request in requests {
            let log = config.record.transforms.then_some(&mut transforms);
            let decision = rcp_decide(request, states, params, rng, log);
            if let Some(w) = decision.winner {
                let v = request
                    .qualities
                    .iter()
                    .find(|(id, _)| *id == w)
                    .map(|&(_, v)| v)
                    .expect("winner was recalled");
                trace.record_win(w.index(), t, v);
            }
            if config.record.decisions {
                trace.decisions.push(decision);
            }
        }
        rcp_period_update(
            states,
            params,
            config.rcp_gradient,
            requests.len(),
            average_requests,
        )
        .map_err(|e| match e {
            Error::ZeroExpectedCost => Error::Mismatch(format!(
                "period {t}: campaign spent with zero expected cost"
            )),
            other => other,
        })?;
        for (j, s) in states.iter().enumerate() {
            snapshots[trace.cell(j, t)] = DualSnapshot {
                alpha_bar: s.alpha_bar,
                alpha: s.alpha,
                eptr: s.eptr,
            };
        }
    }
    trace.snapshots = snapshots;
    trace.transforms = transforms;
    Ok(trace)
}
