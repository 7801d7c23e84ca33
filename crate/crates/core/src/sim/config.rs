use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::keyed_rng;
use crate::engine::{Algorithm, DmdUpdate, EngineConfig, RcpGradient, TargetMode};
use crate::pacing::{Divergence, PacingHyperParams};
use crate::quality::BetaQualityModel;
use crate::{CampaignId, Error, Result};

const CAMPAIGN_STREAM: u64 = 0xC0;

/// Static description of one campaign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSpec {
    pub id: CampaignId,
    /// Total impressions `B_j`.
    pub budget: u64,
    /// Probability that a request recalls the campaign.
    pub recall_prob: f64,
    pub quality_model: BetaQualityModel,
}

impl CampaignSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.recall_prob > 0.0 && self.recall_prob <= 1.0) {
            return Err(Error::config(
                format!("campaigns[{}].recall_prob", self.id),
                "must lie in (0, 1]",
            ));
        }
        if self.budget == 0 {
            return Err(Error::config(
                format!("campaigns[{}].budget", self.id),
                "must be >= 1",
            ));
        }
        Ok(())
    }
}

/// Knobs of the synthetic campaign generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub num_campaigns: usize,
    pub recall_prob_range: [f64; 2],
    pub m_range: [f64; 2],
    pub n_range: [f64; 2],
    /// Budgets are log-uniform over this many orders of magnitude.
    pub budget_orders: f64,
    /// Total budget over total requests.
    pub demand_ratio: f64,
    /// Cap on each budget as a share of the campaign's audience.
    pub max_audience_share: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            num_campaigns: 30,
            recall_prob_range: [0.05, 0.8],
            m_range: [2.0, 4.0],
            n_range: [25.0, 50.0],
            budget_orders: 3.0,
            demand_ratio: 0.25,
            max_audience_share: 0.3,
        }
    }
}

/// Mid-run change of every campaign's quality law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    /// First period drawn from the drifted law.
    pub period: usize,
    pub m_scale: f64,
    pub n_scale: f64,
}

/// Lists of values for a full-factorial RCPacing ablation. Unset axes keep
/// the base hyper-parameters.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationGrid {
    pub p_ub: Vec<f64>,
    pub divergence: Vec<Divergence>,
    pub slope_k: Vec<f64>,
    pub adaptive_clip: Vec<bool>,
    pub eta: Vec<f64>,
    pub epsilon: Vec<f64>,
}

/// One point of an ablation grid; `None` marks an axis the grid leaves alone.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AblationCell {
    pub p_ub: Option<f64>,
    pub divergence: Option<Divergence>,
    pub slope_k: Option<f64>,
    pub adaptive_clip: Option<bool>,
    pub eta: Option<f64>,
    pub epsilon: Option<f64>,
}

impl AblationCell {
    pub fn apply(&self, base: &PacingHyperParams) -> PacingHyperParams {
        let mut p = *base;
        if let Some(v) = self.p_ub {
            p.p_ub = v;
        }
        if let Some(v) = self.divergence {
            p.divergence = v;
        }
        if let Some(v) = self.slope_k {
            p.slope_k = v;
        }
        if let Some(v) = self.adaptive_clip {
            p.adaptive_clip_enabled = v;
        }
        if let Some(v) = self.eta {
            p.eta = v;
        }
        if let Some(v) = self.epsilon {
            p.epsilon = v;
        }
        p
    }

    /// `name=value` pairs of the varied axes, in grid order.
    pub fn key(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if let Some(v) = self.p_ub {
            out.push(("p_ub", v.to_string()));
        }
        if let Some(v) = self.divergence {
            out.push(("divergence", v.to_string()));
        }
        if let Some(v) = self.slope_k {
            out.push(("slope_k", v.to_string()));
        }
        if let Some(v) = self.adaptive_clip {
            out.push(("adaptive_clip", if v { "on" } else { "off" }.to_string()));
        }
        if let Some(v) = self.eta {
            out.push(("eta", v.to_string()));
        }
        if let Some(v) = self.epsilon {
            out.push(("epsilon", v.to_string()));
        }
        out
    }
}

impl AblationGrid {
    pub fn is_empty(&self) -> bool {
        self.p_ub.is_empty()
            && self.divergence.is_empty()
            && self.slope_k.is_empty()
            && self.adaptive_clip.is_empty()
            && self.eta.is_empty()
            && self.epsilon.is_empty()
    }

    /// Full factorial product; the last axis varies fastest.
    pub fn cells(&self) -> Vec<AblationCell> {
        fn axis<T: Copy>(values: &[T]) -> Vec<Option<T>> {
            if values.is_empty() {
                vec![None]
            } else {
                values.iter().copied().map(Some).collect()
            }
        }
        let mut out = Vec::new();
        for &p_ub in &axis(&self.p_ub) {
            for &divergence in &axis(&self.divergence) {
                for &slope_k in &axis(&self.slope_k) {
                    for &adaptive_clip in &axis(&self.adaptive_clip) {
                        for &eta in &axis(&self.eta) {
                            for &epsilon in &axis(&self.epsilon) {
                                out.push(AblationCell {
                                    p_ub,
                                    divergence,
                                    slope_k,
                                    adaptive_clip,
                                    eta,
                                    epsilon,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// A complete experiment description, usually read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub num_periods: usize,
    pub requests_per_period: usize,
    /// Explicit campaigns; when empty they are drawn from `generator`.
    pub campaigns: Vec<CampaignSpec>,
    pub generator: GeneratorConfig,
    pub seed: u64,
    pub hyperparams: PacingHyperParams,
    pub algorithms: Vec<Algorithm>,
    pub rounds: usize,
    pub budget_scale_range: [f64; 2],
    /// Draw a fresh stream every round instead of rescaling budgets only.
    pub regenerate_stream: bool,
    /// Logged stream to replay instead of generating one.
    pub stream_csv: Option<PathBuf>,
    pub drift: Option<DriftConfig>,
    pub dmd_update: DmdUpdate,
    pub dmd_positive_premium: bool,
    pub target_mode: TargetMode,
    pub rcp_gradient: RcpGradient,
    pub smart_layers: usize,
    /// Compute regret when the instance has at most this many edges.
    pub regret_edge_cap: usize,
    pub ablation: AblationGrid,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let engine = EngineConfig::default();
        Self {
            num_periods: 50,
            requests_per_period: 1200,
            campaigns: Vec::new(),
            generator: GeneratorConfig::default(),
            seed: 42,
            hyperparams: PacingHyperParams::default(),
            algorithms: Algorithm::ALL.to_vec(),
            rounds: 20,
            budget_scale_range: [0.8, 1.2],
            regenerate_stream: false,
            stream_csv: None,
            drift: None,
            dmd_update: engine.dmd_update,
            dmd_positive_premium: engine.dmd_positive_premium,
            target_mode: engine.target_mode,
            rcp_gradient: engine.rcp_gradient,
            smart_layers: engine.smart_layers,
            regret_edge_cap: crate::metrics::DEFAULT_EDGE_CAP,
            ablation: AblationGrid::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            // Name the offending key by its line, since toml's messages
            // often only describe the value.
            let field = match e.span() {
                Some(span) => {
                    let line = text[..span.start].matches('\n').count() + 1;
                    let key = text
                        .lines()
                        .nth(line - 1)
                        .and_then(|l| l.split('=').next())
                        .map(str::trim)
                        .unwrap_or("");
                    format!("{key} (line {line})")
                }
                None => "document".to_string(),
            };
            Error::Config {
                field,
                reason: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. A relative `stream_csv` is taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(csv), Some(dir)) = (&cfg.stream_csv, path.parent()) {
            if csv.is_relative() {
                cfg.stream_csv = Some(dir.join(csv));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_periods == 0 {
            return Err(Error::config("num_periods", "must be >= 1"));
        }
        if self.stream_csv.is_none() && self.requests_per_period == 0 {
            return Err(Error::config("requests_per_period", "must be >= 1"));
        }
        if self.rounds == 0 {
            return Err(Error::config("rounds", "must be >= 1"));
        }
        let [lo, hi] = self.budget_scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::config("budget_scale_range", "need 0 < low <= high"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::config(
                "algorithms",
                "must name at least one algorithm",
            ));
        }
        for (j, c) in self.campaigns.iter().enumerate() {
            if c.id.index() != j {
                return Err(Error::config(
                    format!("campaigns[{j}].id"),
                    "ids must be 0, 1, 2, ... in order",
                ));
            }
            c.validate()?;
        }
        if self.campaigns.is_empty() {
            let g = &self.generator;
            let range_ok = |r: [f64; 2]| r[0] <= r[1];
            if g.num_campaigns == 0 {
                return Err(Error::config("generator.num_campaigns", "must be >= 1"));
            }
            if !(range_ok(g.recall_prob_range)
                && g.recall_prob_range[0] > 0.0
                && g.recall_prob_range[1] <= 1.0)
            {
                return Err(Error::config(
                    "generator.recall_prob_range",
                    "need 0 < low <= high <= 1",
                ));
            }
            if !(range_ok(g.m_range) && g.m_range[0] >= 2.0) {
                return Err(Error::config("generator.m_range", "need 2 <= low <= high"));
            }
            if !(range_ok(g.n_range) && g.n_range[0] >= 2.0) {
                return Err(Error::config("generator.n_range", "need 2 <= low <= high"));
            }
            if !(g.budget_orders >= 0.0) {
                return Err(Error::config("generator.budget_orders", "must be >= 0"));
            }
            if !(g.demand_ratio > 0.0) {
                return Err(Error::config("generator.demand_ratio", "must be > 0"));
            }
            if !(g.max_audience_share > 0.0) {
                return Err(Error::config("generator.max_audience_share", "must be > 0"));
            }
        }
        if let Some(d) = &self.drift {
            if d.period >= self.num_periods && self.stream_csv.is_none() {
                return Err(Error::config("drift.period", "must be < num_periods"));
            }
            if !(d.m_scale > 0.0 && d.n_scale > 0.0) {
                return Err(Error::config("drift", "scales must be > 0"));
            }
        }
        self.engine_config().validate()
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            params: self.hyperparams,
            dmd_update: self.dmd_update,
            dmd_positive_premium: self.dmd_positive_premium,
            target_mode: self.target_mode,
            rcp_gradient: self.rcp_gradient,
            smart_layers: self.smart_layers,
            record: Default::default(),
        }
    }

    pub fn total_requests(&self) -> usize {
        self.num_periods * self.requests_per_period
    }

    /// Explicit campaigns, or the generated population for this seed.
    pub fn campaign_specs(&self) -> Vec<CampaignSpec> {
        if !self.campaigns.is_empty() {
            return self.campaigns.clone();
        }
        generate_campaigns(&self.generator, self.total_requests(), self.seed)
    }
}

/// Draws a heterogeneous campaign population.
///
/// Recall probabilities and Beta shapes are uniform in their ranges. Raw
/// budgets are log-uniform over `budget_orders` decades and rescaled by a
/// common factor, with each budget capped at `max_audience_share` of its
/// audience, so that the total is `demand_ratio * total_requests`.
pub fn generate_campaigns(
    g: &GeneratorConfig,
    total_requests: usize,
    seed: u64,
) -> Vec<CampaignSpec> {
    let mut rng = keyed_rng(seed, CAMPAIGN_STREAM, 0, 0);
    let uniform = |rng: &mut rand_chacha::ChaCha8Rng, r: [f64; 2]| {
        if r[1] > r[0] {
            rng.random_range(r[0]..r[1])
        } else {
            r[0]
        }
    };
    let mut drafts = Vec::with_capacity(g.num_campaigns);
    for _ in 0..g.num_campaigns {
        let recall = uniform(&mut rng, g.recall_prob_range);
        let m = uniform(&mut rng, g.m_range);
        let n = uniform(&mut rng, g.n_range);
        let raw = 10f64.powf(rng.random::<f64>() * g.budget_orders);
        let cap = g.max_audience_share * recall * total_requests as f64;
        drafts.push((recall, m, n, raw, cap));
    }
    let target = g.demand_ratio * total_requests as f64;
    let total_at = |s: f64| drafts.iter().map(|d| (s * d.3).min(d.4)).sum::<f64>();
    let cap_total: f64 = drafts.iter().map(|d| d.4).sum();
    let scale = if cap_total <= target {
        f64::INFINITY
    } else {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while total_at(hi) < target {
            hi *= 2.0;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if total_at(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    drafts
        .into_iter()
        .enumerate()
        .map(|(j, (recall, m, n, raw, cap))| CampaignSpec {
            id: CampaignId(j as u32),
            budget: ((scale * raw).min(cap).round() as u64).max(1),
            recall_prob: recall,
            quality_model: BetaQualityModel::new(m, n).expect("ranges validated"),
        })
        .collect()
}
