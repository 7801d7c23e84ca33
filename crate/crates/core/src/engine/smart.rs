use rand::Rng;

use super::dmd::period_target;
use super::{
    Algorithm, AllocationDecision, DeliveryTrace, DualSnapshot, EngineConfig, FitSchedule,
    ImpressionStream,
};
use crate::quality::BoxCoxFit;
use crate::sim::CampaignSpec;
use crate::{CampaignId, Error, Result};

/// Feedback factor limits per period.
const MIN_FACTOR: f64 = 0.5;
const MAX_FACTOR: f64 = 2.0;
/// Percentiles of the period fit spanned by the layers.
const LAYER_SPAN: (f64, f64) = (0.01, 0.99);

/// Layered throttling state of one campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredCampaign {
    pub id: CampaignId,
    pub budget: u64,
    pub remaining: u64,
    /// Pass-through rate per quality layer, lowest quality first.
    pub ptr: Vec<f64>,
    lo: f64,
    width: f64,
    counts: Vec<u64>,
    cost: u64,
    target: f64,
}

impl LayeredCampaign {
    pub fn new(id: CampaignId, budget: u64, layers: usize, initial_ptr: f64) -> Self {
        Self {
            id,
            budget,
            remaining: budget,
            ptr: vec![initial_ptr.clamp(0.0, 1.0); layers],
            lo: 0.0,
            width: 1.0,
            counts: vec![0; layers],
            cost: 0,
            target: 0.0,
        }
    }

    /// Sets equal-width quality layers between two fitted percentiles.
    pub fn set_bounds(&mut self, fit: &BoxCoxFit) {
        let lo = fit.backward(LAYER_SPAN.0).unwrap_or(0.0).clamp(0.0, 1.0);
        let hi = fit.backward(LAYER_SPAN.1).unwrap_or(1.0).clamp(0.0, 1.0);
        self.lo = lo;
        self.width = if hi > lo { hi - lo } else { 1.0 };
    }

    pub fn layer_of(&self, v: f64) -> usize {
        let l = self.ptr.len();
        let x = ((v - self.lo) / self.width * l as f64).floor();
        if x <= 0.0 {
            0
        } else {
            (x as usize).min(l - 1)
        }
    }

    fn start_period(&mut self, target: f64) {
        self.target = target;
        self.cost = 0;
        self.counts.iter_mut().for_each(|c| *c = 0);
    }

    /// Rescales the expected number of passes by `target / cost`, bounded to
    /// `[0.5, 2]`, and hands the new pass budget to layers from the top down.
    /// Underspending therefore opens the best layers first and overspending
    /// closes the worst layers first.
    pub fn end_period(&mut self, wr_glb: f64) {
        let passes: f64 = self
            .ptr
            .iter()
            .zip(&self.counts)
            .map(|(p, &n)| p * n as f64)
            .sum();
        let factor = if self.cost == 0 {
            MAX_FACTOR
        } else {
            (self.target / self.cost as f64).clamp(MIN_FACTOR, MAX_FACTOR)
        };
        let mut budget = if passes > 0.0 {
            passes * factor
        } else {
            self.target / wr_glb
        };
        for l in (0..self.ptr.len()).rev() {
            let n = self.counts[l] as f64;
            if n > 0.0 {
                let p = (budget / n).min(1.0);
                self.ptr[l] = p;
                budget -= p * n;
            } else {
                self.ptr[l] = if budget > 0.0 { 1.0 } else { 0.0 };
            }
        }
    }
}

/// Runs the layered probabilistic-throttling baseline.
///
/// Each campaign starts with a uniform pass-through rate sized to win its
/// per-period target at the assumed global win rate. Passed campaigns bid
/// their raw quality; the highest wins.
pub fn run_smart_baseline<R: Rng + ?Sized>(
    stream: &ImpressionStream,
    specs: &[CampaignSpec],
    fits: &FitSchedule,
    config: &EngineConfig,
    rng: &mut R,
) -> Result<DeliveryTrace> {
    config.validate()?;
    stream.validate(specs.len())?;
    let t_count = stream.num_periods();
    if fits.num_campaigns() != specs.len() || fits.num_periods() < t_count {
        return Err(Error::Mismatch(
            "fit schedule does not cover the scenario".to_string(),
        ));
    }
    let wr_glb = config.params.wr_glb;
    let n_total = stream.num_requests() as f64;
    let mut campaigns: Vec<LayeredCampaign> = specs
        .iter()
        .map(|s| {
            let per_period_recalls = s.recall_prob * n_total / t_count.max(1) as f64;
            let rho = s.budget as f64 / t_count.max(1) as f64;
            let initial = if per_period_recalls > 0.0 {
                rho / wr_glb / per_period_recalls
            } else {
                1.0
            };
            LayeredCampaign::new(s.id, s.budget, config.smart_layers, initial)
        })
        .collect();
    let mut trace = DeliveryTrace::new(
        Algorithm::Smart,
        specs.iter().map(|s| s.budget).collect(),
        stream,
    );
    let mut snapshots = vec![
        DualSnapshot {
            alpha_bar: 0.0,
            alpha: 0.0,
            eptr: 0.0
        };
        specs.len() * t_count
    ];

    for (t, requests) in stream.periods.iter().enumerate() {
        for (j, c) in campaigns.iter_mut().enumerate() {
            c.set_bounds(&fits.fit(t, j));
            c.start_period(period_target(
                config.target_mode,
                c.budget,
                c.remaining,
                t,
                t_count,
            ));
        }
        for request in requests {
            let mut best: Option<(usize, f64)> = None;
            let mut throttled = Vec::new();
            for &(id, v) in &request.qualities {
                let draw: f64 = rng.random();
                let c = &mut campaigns[id.index()];
                if c.remaining < 1 {
                    continue;
                }
                let layer = c.layer_of(v);
                c.counts[layer] += 1;
                if draw >= c.ptr[layer] {
                    throttled.push(id);
                    continue;
                }
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((id.index(), v));
                }
            }
            if let Some((j, v)) = best {
                campaigns[j].remaining -= 1;
                campaigns[j].cost += 1;
                trace.record_win(j, t, v);
            }
            if config.record.decisions {
                trace.decisions.push(AllocationDecision {
                    request_id: request.request_id,
                    winner: best.map(|(j, _)| campaigns[j].id),
                    bid: best.map_or(0.0, |(_, v)| v),
                    throttled,
                });
            }
        }
        for (j, c) in campaigns.iter_mut().enumerate() {
            if c.remaining >= 1 {
                c.end_period(wr_glb);
            }
            // Mean pass-through rate stands in for the throttle in the series.
            snapshots[trace.cell(j, t)].eptr = c.ptr.iter().sum::<f64>() / c.ptr.len() as f64;
        }
    }
    trace.snapshots = snapshots;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layered(layers: usize, ptr: f64) -> LayeredCampaign {
        let mut c = LayeredCampaign::new(CampaignId(0), 1000, layers, ptr);
        c.lo = 0.0;
        c.width = 1.0;
        c
    }

    #[test]
    fn layer_boundaries() {
        let c = layered(10, 0.5);
        assert_eq!(c.layer_of(0.0), 0);
        assert_eq!(c.layer_of(0.05), 0);
        assert_eq!(c.layer_of(0.15), 1);
        assert_eq!(c.layer_of(0.95), 9);
        assert_eq!(c.layer_of(1.5), 9);
        assert_eq!(c.layer_of(-1.0), 0);
    }

    #[test]
    fn underspend_opens_top_layer_first() {
        let mut c = layered(4, 0.5);
        c.start_period(10.0);
        c.counts = vec![10, 10, 10, 10];
        c.cost = 8;
        c.end_period(0.15);
        // 20 expected passes * 1.25 = 25, top layer fills to one first.
        assert_eq!(c.ptr[3], 1.0);
        assert!((c.ptr[2] - 1.0).abs() < 1e-12);
        assert!((c.ptr[1] - 0.5).abs() < 1e-12);
        assert_eq!(c.ptr[0], 0.0);
    }

    #[test]
    fn overspend_closes_bottom_layer_first() {
        let mut c = layered(4, 1.0);
        c.start_period(10.0);
        c.counts = vec![10, 10, 10, 10];
        c.cost = 16;
        c.end_period(0.15);
        // 40 passes * 0.625 = 25.
        assert_eq!(c.ptr[0], 0.0);
        assert!((c.ptr[1] - 0.5).abs() < 1e-12);
        assert_eq!(c.ptr[3], 1.0);
    }

    #[test]
    fn single_layer_is_uniform_throttle() {
        let mut c = layered(1, 0.2);
        c.start_period(10.0);
        c.counts = vec![100];
        c.cost = 5;
        c.end_period(0.15);
        assert!((c.ptr[0] - 0.4).abs() < 1e-12);
        c.start_period(10.0);
        c.counts = vec![100];
        c.cost = 10;
        c.end_period(0.15);
        assert!((c.ptr[0] - 0.4).abs() < 1e-12);
    }
}
