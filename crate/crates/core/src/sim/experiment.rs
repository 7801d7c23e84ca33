use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    generate_stream, keyed_rng, load_stream_csv, AblationCell, CampaignSpec, ScenarioConfig,
};
use crate::engine::{
    run_algorithm, Algorithm, DeliveryTrace, EngineConfig, FitSchedule, ImpressionStream,
};
use crate::metrics::{aggregate_rounds, hindsight_optimum, AggregateRow, MetricsReport};
use crate::quality::BetaQualityModel;
use crate::{Error, Result};

const SCALE_KEY: u64 = 0x5C;
const RUN_KEY: u64 = 0x2A;

/// Multiplies every budget by an independent uniform factor in `range`,
/// rounding to the nearest integer and flooring at one.
pub fn scale_budgets(
    specs: &[CampaignSpec],
    round: u64,
    seed: u64,
    range: [f64; 2],
) -> Vec<CampaignSpec> {
    let mut rng = keyed_rng(seed, SCALE_KEY, round, 0);
    let [lo, hi] = range;
    specs
        .iter()
        .map(|s| {
            let factor = if hi > lo {
                rng.random_range(lo..=hi)
            } else {
                lo
            };
            CampaignSpec {
                budget: ((s.budget as f64 * factor).round() as u64).max(1),
                ..*s
            }
        })
        .collect()
}

/// A stream together with its campaigns and percentile fits.
#[derive(Debug, Clone)]
pub struct Instance {
    pub specs: Vec<CampaignSpec>,
    pub stream: Arc<ImpressionStream>,
    pub fits: Arc<FitSchedule>,
}

impl Instance {
    pub fn new(
        specs: Vec<CampaignSpec>,
        stream: ImpressionStream,
        priors: bool,
        seed: u64,
    ) -> Result<Self> {
        stream.validate(specs.len())?;
        let prior_models: Vec<Option<BetaQualityModel>> = specs
            .iter()
            .map(|s| priors.then_some(s.quality_model))
            .collect();
        let fits = FitSchedule::build(&stream, &prior_models, seed)?;
        Ok(Self {
            specs,
            stream: Arc::new(stream),
            fits: Arc::new(fits),
        })
    }

    /// The base instance of a scenario: the logged stream when configured,
    /// otherwise the stream generated for `(seed, round)`.
    pub fn from_config(cfg: &ScenarioConfig, round: u64) -> Result<Self> {
        let specs = cfg.campaign_specs();
        match &cfg.stream_csv {
            Some(path) => {
                let stream = load_stream_csv(path)?;
                Self::new(specs, stream, false, cfg.seed)
            }
            None => {
                let stream = generate_stream(
                    &specs,
                    cfg.num_periods,
                    cfg.requests_per_period,
                    cfg.drift.as_ref(),
                    cfg.seed,
                    round,
                );
                Self::new(specs, stream, true, cfg.seed)
            }
        }
    }

    pub fn with_specs(&self, specs: Vec<CampaignSpec>) -> Self {
        Self {
            specs,
            stream: Arc::clone(&self.stream),
            fits: Arc::clone(&self.fits),
        }
    }
}

/// Runs one algorithm on one instance with the random stream keyed by
/// `(seed, round, algorithm)`.
pub fn run_keyed(
    algorithm: Algorithm,
    instance: &Instance,
    config: &EngineConfig,
    seed: u64,
    round: u64,
) -> Result<DeliveryTrace> {
    let mut rng = keyed_rng(seed, RUN_KEY, round, algorithm.stream_key());
    run_algorithm(
        algorithm,
        &instance.stream,
        &instance.specs,
        &instance.fits,
        config,
        &mut rng,
    )
}

/// One long-format data point for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub campaign: u32,
    pub period: usize,
    pub series: String,
    pub value: f64,
}

type SeriesFn = fn(&DeliveryTrace, usize, usize) -> f64;

/// Spend and controller series of one trace.
pub fn trace_series(trace: &DeliveryTrace) -> Vec<SeriesPoint> {
    let label = trace.algorithm.label();
    let mut names: Vec<(&str, SeriesFn)> =
        vec![("spend", |tr, j, t| tr.wins_of(j)[t] as f64)];
    match trace.algorithm {
        Algorithm::Dmd => names.push(("alpha", |tr, j, t| {
            tr.snapshot(j, t).map_or(f64::NAN, |s| s.alpha)
        })),
        Algorithm::Rcpacing => {
            names.push(("alpha_bar", |tr, j, t| {
                tr.snapshot(j, t).map_or(f64::NAN, |s| s.alpha_bar)
            }));
            names.push(("alpha", |tr, j, t| {
                tr.snapshot(j, t).map_or(f64::NAN, |s| s.alpha)
            }));
            names.push(("eptr", |tr, j, t| {
                tr.snapshot(j, t).map_or(f64::NAN, |s| s.eptr)
            }));
        }
        Algorithm::Smart => names.push(("mean_ptr", |tr, j, t| {
            tr.snapshot(j, t).map_or(f64::NAN, |s| s.eptr)
        })),
    }
    let mut out = Vec::new();
    for (name, get) in names {
        for j in 0..trace.num_campaigns {
            for t in 0..trace.num_periods {
                out.push(SeriesPoint {
                    campaign: j as u32,
                    period: t,
                    series: format!("{label}.{name}"),
                    value: get(trace, j, t),
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    /// Ordered by round, then by the configured algorithm order.
    pub reports: Vec<MetricsReport>,
    pub aggregate: Vec<AggregateRow>,
    /// Series of round 0.
    pub series: Vec<SeriesPoint>,
}

struct RoundResult {
    reports: Vec<MetricsReport>,
    series: Vec<SeriesPoint>,
}

fn run_round(
    cfg: &ScenarioConfig,
    engine: &EngineConfig,
    base: &Instance,
    algorithms: &[Algorithm],
    round: usize,
    keep_series: bool,
) -> Result<RoundResult> {
    let r = round as u64;
    let source = if cfg.regenerate_stream && cfg.stream_csv.is_none() {
        Instance::from_config(cfg, r)?
    } else {
        base.clone()
    };
    let instance = source.with_specs(scale_budgets(
        &source.specs,
        r,
        cfg.seed,
        cfg.budget_scale_range,
    ));
    let budgets: Vec<u64> = instance.specs.iter().map(|s| s.budget).collect();
    let opt = if instance.stream.num_edges() <= cfg.regret_edge_cap {
        Some(hindsight_optimum(
            &instance.stream,
            &budgets,
            cfg.regret_edge_cap,
        )?)
    } else {
        None
    };
    let mut reports = Vec::with_capacity(algorithms.len());
    let mut series = Vec::new();
    for &alg in algorithms {
        let trace = run_keyed(alg, &instance, engine, cfg.seed, r)?;
        reports.push(MetricsReport::from_trace(&trace, round, opt.as_ref())?);
        if keep_series {
            series.extend(trace_series(&trace));
        }
    }
    Ok(RoundResult { reports, series })
}

/// Runs every configured algorithm for every round. Rounds share the base
/// stream unless `regenerate_stream` is set, and differ in their budget
/// scaling; they run in parallel on the current rayon pool.
pub fn run_experiment(cfg: &ScenarioConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let base = Instance::from_config(cfg, 0)?;
    run_experiment_on(cfg, &base)
}

/// As [`run_experiment`] with a prepared base instance.
pub fn run_experiment_on(cfg: &ScenarioConfig, base: &Instance) -> Result<ExperimentOutput> {
    let engine = cfg.engine_config();
    let rounds: Vec<RoundResult> = (0..cfg.rounds)
        .into_par_iter()
        .map(|r| run_round(cfg, &engine, base, &cfg.algorithms, r, r == 0))
        .collect::<Result<_>>()?;
    let mut reports = Vec::new();
    let mut series = Vec::new();
    for rr in rounds {
        reports.extend(rr.reports);
        series.extend(rr.series);
    }
    Ok(ExperimentOutput {
        aggregate: aggregate_rounds(&reports),
        reports,
        series,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub cell: AblationCell,
    pub reports: Vec<MetricsReport>,
    pub aggregate: AggregateRow,
}

/// Runs RCPacing over every cell of the configured grid. All cells share the
/// instance and the per-round random streams, so cells differ only in their
/// hyper-parameters.
pub fn run_ablation(cfg: &ScenarioConfig) -> Result<Vec<AblationResult>> {
    cfg.validate()?;
    let base = Instance::from_config(cfg, 0)?;
    run_ablation_on(cfg, &base)
}

pub fn run_ablation_on(cfg: &ScenarioConfig, base: &Instance) -> Result<Vec<AblationResult>> {
    let cells = cfg.ablation.cells();
    let mut engines = Vec::with_capacity(cells.len());
    for cell in &cells {
        let mut engine = cfg.engine_config();
        engine.params = cell.apply(&cfg.hyperparams);
        engine.validate().map_err(|e| match e {
            Error::Config { field, reason } => Error::Config {
                field: format!("ablation.{field}"),
                reason,
            },
            other => other,
        })?;
        engines.push(engine);
    }
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.rounds).map(move |r| (c, r)))
        .collect();
    let results: Vec<MetricsReport> = jobs
        .par_iter()
        .map(|&(c, r)| {
            run_round(cfg, &engines[c], base, &[Algorithm::Rcpacing], r, false)
                .map(|mut rr| rr.reports.remove(0))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(cells.len());
    for (c, cell) in cells.into_iter().enumerate() {
        let reports = results[c * cfg.rounds..(c + 1) * cfg.rounds].to_vec();
        let aggregate = aggregate_rounds(&reports)
            .into_iter()
            .next()
            .expect("cell has at least one round");
        out.push(AblationResult {
            cell,
            reports,
            aggregate,
        });
    }
    Ok(out)
}
