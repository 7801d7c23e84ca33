use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_stream, run_keyed, CampaignSpec, Instance};
use crate::engine::{Algorithm, DmdUpdate, EngineConfig, RcpGradient};
use crate::metrics::{hindsight_optimum, regret};
use crate::quality::BetaQualityModel;
use crate::{CampaignId, Error, Result};

/// Regret as a function of the horizon, with budgets `rho_j * T` and step
/// sizes `c / sqrt(T)`.
///
/// Every campaign recalls every request. Each request is its own period, so
/// RCPacing updates its duals per request with the gradient `rho - x`, the
/// emergency throttle is held open, and DMD runs in per-impression mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegretStudy {
    pub horizons: Vec<usize>,
    pub rho: Vec<f64>,
    pub shapes: Vec<(f64, f64)>,
    pub dmd_eta_scale: f64,
    pub rcp_eta_scale: f64,
    pub dmd_positive_premium: bool,
    pub seeds: u64,
    pub edge_cap: usize,
}

impl Default for RegretStudy {
    fn default() -> Self {
        Self {
            horizons: vec![1000, 4000, 16000],
            rho: vec![0.2, 0.15, 0.1],
            shapes: vec![(3.0, 12.0), (2.0, 6.0), (4.0, 20.0)],
            dmd_eta_scale: 1.0,
            rcp_eta_scale: 1.0,
            dmd_positive_premium: true,
            seeds: 8,
            edge_cap: 50_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretPoint {
    pub horizon: usize,
    pub algorithm: Algorithm,
    /// Mean over seeds.
    pub regret: f64,
    pub optimum: f64,
}

impl RegretStudy {
    pub fn specs(&self, horizon: usize) -> Result<Vec<CampaignSpec>> {
        if self.rho.len() != self.shapes.len() {
            return Err(Error::config("shapes", "need one (m, n) pair per rho"));
        }
        self.rho
            .iter()
            .zip(&self.shapes)
            .enumerate()
            .map(|(j, (&rho, &(m, n)))| {
                Ok(CampaignSpec {
                    id: CampaignId(j as u32),
                    budget: ((rho * horizon as f64).round() as u64).max(1),
                    recall_prob: 1.0,
                    quality_model: BetaQualityModel::new(m, n)?,
                })
            })
            .collect()
    }

    pub fn engine(&self, algorithm: Algorithm, horizon: usize) -> EngineConfig {
        let mut e = EngineConfig::default();
        let root = (horizon as f64).sqrt();
        match algorithm {
            Algorithm::Dmd => {
                e.dmd_update = DmdUpdate::PerImpression;
                e.dmd_positive_premium = self.dmd_positive_premium;
                e.params.eta = self.dmd_eta_scale / root;
            }
            _ => {
                e.rcp_gradient = RcpGradient::PerRequest;
                e.params.eta = self.rcp_eta_scale / root;
                e.params.initial_trial_rate = 1.0;
                e.params.eptr_speed_cap = f64::MAX;
            }
        }
        e
    }

    /// Mean regret per (horizon, algorithm), horizons in the configured order.
    pub fn run(&self, algorithms: &[Algorithm]) -> Result<Vec<RegretPoint>> {
        let jobs: Vec<(usize, u64)> = self
            .horizons
            .iter()
            .flat_map(|&h| (0..self.seeds).map(move |s| (h, s)))
            .collect();
        let per_job: Vec<Vec<(f64, f64)>> = jobs
            .par_iter()
            .map(|&(h, seed)| {
                let specs = self.specs(h)?;
                let stream = generate_stream(&specs, h, 1, None, seed, 0);
                let instance = Instance::new(specs, stream, true, seed)?;
                let budgets: Vec<u64> = instance.specs.iter().map(|s| s.budget).collect();
                let opt = hindsight_optimum(&instance.stream, &budgets, self.edge_cap)?;
                algorithms
                    .iter()
                    .map(|&alg| {
                        let trace = run_keyed(alg, &instance, &self.engine(alg, h), seed, 0)?;
                        Ok((regret(&trace, &opt)?, opt.value))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let mut out = Vec::new();
        for (hi, &h) in self.horizons.iter().enumerate() {
            let rows = &per_job[hi * self.seeds as usize..(hi + 1) * self.seeds as usize];
            for (a, &alg) in algorithms.iter().enumerate() {
                let n = rows.len().max(1) as f64;
                out.push(RegretPoint {
                    horizon: h,
                    algorithm: alg,
                    regret: rows.iter().map(|r| r[a].0).sum::<f64>() / n,
                    optimum: rows.iter().map(|r| r[a].1).sum::<f64>() / n,
                });
            }
        }
        Ok(out)
    }
}

/// `Regret(h_{i+1}) / Regret(h_i)` for consecutive horizons of one algorithm.
pub fn growth_ratios(points: &[RegretPoint], algorithm: Algorithm) -> Vec<f64> {
    let rs: Vec<f64> = points
        .iter()
        .filter(|p| p.algorithm == algorithm)
        .map(|p| p.regret)
        .collect();
    rs.windows(2).map(|w| w[1] / w[0]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_study_runs() {
        let study = RegretStudy {
            horizons: vec![200, 400],
            seeds: 2,
            ..Default::default()
        };
        let pts = study.run(&[Algorithm::Dmd, Algorithm::Rcpacing]).unwrap();
        assert_eq!(pts.len(), 4);
        assert!(pts.iter().all(|p| p.regret >= -1e-9 && p.optimum > 0.0));
        assert_eq!(growth_ratios(&pts, Algorithm::Dmd).len(), 1);
    }
}
