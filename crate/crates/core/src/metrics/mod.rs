//! Evaluation metrics over delivery traces and their aggregation across
//! rounds.

mod optimum;

pub use optimum::{hindsight_optimum, HindsightOptimum, DEFAULT_EDGE_CAP};

use serde::{Deserialize, Serialize};

use crate::engine::{Algorithm, DeliveryTrace};
use crate::{Error, Result};

/// Slack allowed when an algorithm appears to beat the optimum.
const REGRET_TOLERANCE: f64 = 1e-9;

/// Total wins over total budget.
pub fn delivery_rate(trace: &DeliveryTrace) -> Result<f64> {
    let budget: u64 = trace.budgets.iter().sum();
    if budget == 0 {
        return Err(Error::ZeroBudget);
    }
    Ok(trace.total_wins() as f64 / budget as f64)
}

/// Mean over campaigns of the RMS deviation of per-period wins from
/// `B_j / T`.
pub fn unsmoothness(trace: &DeliveryTrace) -> f64 {
    let (m, t) = (trace.num_campaigns, trace.num_periods);
    if m == 0 || t == 0 {
        return 0.0;
    }
    let total: f64 = (0..m)
        .map(|j| {
            let rho = trace.budgets[j] as f64 / t as f64;
            let ss: f64 = trace
                .wins_of(j)
                .iter()
                .map(|&w| (w as f64 - rho).powi(2))
                .sum();
            (ss / t as f64).sqrt()
        })
        .sum();
    total / m as f64
}

/// Mean quality of won impressions, standing in for realized CTR.
pub fn average_ctr(trace: &DeliveryTrace) -> Result<f64> {
    let wins = trace.total_wins();
    if wins == 0 {
        return Err(Error::NoWins);
    }
    Ok(trace.total_quality() / wins as f64)
}

/// Optimum minus achieved quality on the same instance.
pub fn regret(trace: &DeliveryTrace, opt: &HindsightOptimum) -> Result<f64> {
    if trace.budgets != opt.budgets || trace.num_requests != opt.num_requests {
        return Err(Error::Mismatch(format!(
            "trace covers {} requests with budgets {:?}, optimum {} requests with {:?}",
            trace.num_requests, trace.budgets, opt.num_requests, opt.budgets
        )));
    }
    let r = opt.value - trace.total_quality();
    if r < -REGRET_TOLERANCE {
        return Err(Error::Mismatch(format!(
            "allocation exceeds the hindsight optimum by {}",
            -r
        )));
    }
    Ok(r)
}

/// Metrics of one algorithm in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub algorithm: Algorithm,
    pub round_index: usize,
    pub delivery_rate: f64,
    pub unsmoothness: f64,
    /// `NaN` when the run won nothing; `null` in JSON.
    #[serde(with = "nan_as_null")]
    pub avg_ctr: f64,
    pub regret: Option<f64>,
    /// Wins per campaign per period.
    #[serde(default)]
    pub per_period_spend: Vec<Vec<u64>>,
}

impl MetricsReport {
    pub fn from_trace(
        trace: &DeliveryTrace,
        round_index: usize,
        opt: Option<&HindsightOptimum>,
    ) -> Result<Self> {
        Ok(Self {
            algorithm: trace.algorithm,
            round_index,
            delivery_rate: delivery_rate(trace)?,
            unsmoothness: unsmoothness(trace),
            avg_ctr: average_ctr(trace).unwrap_or(f64::NAN),
            regret: opt.map(|o| regret(trace, o)).transpose()?,
            per_period_spend: (0..trace.num_campaigns)
                .map(|j| trace.wins_of(j).to_vec())
                .collect(),
        })
    }
}

/// Sample mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    #[serde(with = "nan_as_null")]
    pub mean: f64,
    #[serde(with = "nan_as_null")]
    pub std: f64,
}

/// JSON has no NaN, so undefined metrics travel as `null`.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

impl Stat {
    /// Ignores `NaN` entries; an empty input gives `NaN` for both fields.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let xs: Vec<f64> = values.into_iter().filter(|x| !x.is_nan()).collect();
        if xs.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub algorithm: Algorithm,
    pub rounds: usize,
    pub unsmoothness: Stat,
    pub delivery_rate: Stat,
    pub avg_ctr: Stat,
    pub regret: Option<Stat>,
}

/// Mean and spread per algorithm, rows ordered DMD, Smart, RCPacing.
pub fn aggregate_rounds(reports: &[MetricsReport]) -> Vec<AggregateRow> {
    let order = [Algorithm::Dmd, Algorithm::Smart, Algorithm::Rcpacing];
    order
        .iter()
        .filter_map(|&alg| {
            let rs: Vec<&MetricsReport> = reports.iter().filter(|r| r.algorithm == alg).collect();
            if rs.is_empty() {
                return None;
            }
            let regrets: Vec<f64> = rs.iter().filter_map(|r| r.regret).collect();
            Some(AggregateRow {
                algorithm: alg,
                rounds: rs.len(),
                unsmoothness: Stat::of(rs.iter().map(|r| r.unsmoothness)),
                delivery_rate: Stat::of(rs.iter().map(|r| r.delivery_rate)),
                avg_ctr: Stat::of(rs.iter().map(|r| r.avg_ctr)),
                regret: (!regrets.is_empty()).then(|| Stat::of(regrets)),
            })
        })
        .collect()
}

/// Pooled standard deviation of two groups' population variances.
pub fn pooled_std(a: &Stat, b: &Stat) -> f64 {
    ((a.std * a.std + b.std * b.std) / 2.0).sqrt()
}
