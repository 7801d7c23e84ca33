use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::ImpressionStream;
use crate::quality::{BetaQualityModel, BoxCoxFit, MIN_FIT_SAMPLES};
use crate::Result;

/// Periods of history a fit looks back over.
pub const FIT_WINDOW: usize = 2;
/// Samples kept per fit; longer windows are thinned with a fixed stride.
pub const FIT_SAMPLE_CAP: usize = 1500;
const PRIOR_SAMPLES: usize = 2000;
const PRIOR_STREAM: u64 = 0x50_5249_4f52;

/// Transform used when no data at all is available for a campaign. Such a
/// campaign is never recalled, so the value only has to be valid.
fn fallback_fit() -> BoxCoxFit {
    BoxCoxFit::new(1.0, -0.9, 0.05, 0.0).expect("valid constant fit")
}

/// Where a period's fit came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitSource {
    Window,
    GlobalPool,
    Prior,
    CurrentPeriod,
    Fallback,
}

/// Percentile transforms for every (period, campaign), each estimated from
/// the qualities recalled in the preceding [`FIT_WINDOW`] periods.
///
/// A campaign with fewer than 30 recalled samples in the window falls back to
/// the pooled samples of all campaigns, then to draws from its prior quality
/// model, then (for logged streams without priors) to the samples of the
/// current period. Fits carry `epsilon = 0`; the skew factor is applied by the
/// allocator.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSchedule {
    num_campaigns: usize,
    fits: Vec<BoxCoxFit>,
    sources: Vec<FitSource>,
}

fn thin(samples: &[f64]) -> Vec<f64> {
    if samples.len() <= FIT_SAMPLE_CAP {
        return samples.to_vec();
    }
    let stride = samples.len().div_ceil(FIT_SAMPLE_CAP);
    samples.iter().step_by(stride).copied().collect()
}

fn try_fit(samples: &[f64]) -> Option<BoxCoxFit> {
    if samples.len() < MIN_FIT_SAMPLES {
        return None;
    }
    BoxCoxFit::fit(&thin(samples), 0.0).ok()
}

impl FitSchedule {
    /// Builds the schedule. `priors[j]`, when present, is sampled with a
    /// generator keyed by `(seed, j)`.
    pub fn build(
        stream: &ImpressionStream,
        priors: &[Option<BetaQualityModel>],
        seed: u64,
    ) -> Result<Self> {
        let m = priors.len();
        let t_count = stream.num_periods();
        // per_period[t][j]: qualities recalled by campaign j in period t.
        let per_period: Vec<Vec<Vec<f64>>> = stream
            .periods
            .iter()
            .map(|requests| {
                let mut by_campaign = vec![Vec::new(); m];
                for r in requests {
                    for &(id, v) in &r.qualities {
                        by_campaign[id.index()].push(v);
                    }
                }
                by_campaign
            })
            .collect();

        let prior_fits: Vec<Option<BoxCoxFit>> = priors
            .par_iter()
            .enumerate()
            .map(|(j, prior)| {
                prior.and_then(|model| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(PRIOR_STREAM ^ ((j as u64) << 20));
                    try_fit(&model.sample_n(&mut rng, PRIOR_SAMPLES))
                })
            })
            .collect();

        let cells: Vec<(BoxCoxFit, FitSource)> = (0..t_count)
            .into_par_iter()
            .flat_map_iter(|t| {
                let lo = t.saturating_sub(FIT_WINDOW);
                let window = &per_period[lo..t];
                let pooled: Vec<f64> = window.iter().flatten().flatten().copied().collect();
                let global = try_fit(&pooled);
                let per_period = &per_period;
                let prior_fits = &prior_fits;
                (0..m).map(move |j| {
                    let own: Vec<f64> = window.iter().flat_map(|p| p[j].iter().copied()).collect();
                    if let Some(fit) = try_fit(&own) {
                        (fit, FitSource::Window)
                    } else if let Some(fit) = global {
                        (fit, FitSource::GlobalPool)
                    } else if let Some(fit) = prior_fits[j] {
                        (fit, FitSource::Prior)
                    } else if let Some(fit) = try_fit(&per_period[t][j]) {
                        (fit, FitSource::CurrentPeriod)
                    } else {
                        (fallback_fit(), FitSource::Fallback)
                    }
                })
            })
            .collect();
        let (fits, sources) = cells.into_iter().unzip();
        Ok(Self {
            num_campaigns: m,
            fits,
            sources,
        })
    }

    /// The same fit for every period, for tests and hand-built scenarios.
    pub fn constant(fits: Vec<BoxCoxFit>, num_periods: usize) -> Self {
        let num_campaigns = fits.len();
        let all = (0..num_periods)
            .flat_map(|_| fits.iter().copied())
            .collect::<Vec<_>>();
        Self {
            num_campaigns,
            sources: vec![FitSource::Window; all.len()],
            fits: all,
        }
    }

    pub fn num_campaigns(&self) -> usize {
        self.num_campaigns
    }

    pub fn num_periods(&self) -> usize {
        self.fits.len().checked_div(self.num_campaigns).unwrap_or(0)
    }

    pub fn fit(&self, period: usize, campaign: usize) -> BoxCoxFit {
        self.fits[period * self.num_campaigns + campaign]
    }

    pub fn source(&self, period: usize, campaign: usize) -> FitSource {
        self.sources[period * self.num_campaigns + campaign]
    }
}
