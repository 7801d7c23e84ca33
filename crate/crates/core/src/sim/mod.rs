//! Scenario construction and the experiment driver: synthetic streams, CSV
//! logs, budget-scaled rounds and ablation grids.

mod config;
mod experiment;
mod regret;
mod stream;

pub use config::{
    generate_campaigns, AblationCell, AblationGrid, CampaignSpec, DriftConfig, GeneratorConfig,
    ScenarioConfig,
};
pub use experiment::{
    run_ablation, run_ablation_on, run_experiment, run_experiment_on, run_keyed, scale_budgets,
    trace_series, AblationResult, ExperimentOutput, Instance, SeriesPoint,
};
pub use regret::{growth_ratios, RegretPoint, RegretStudy};
pub use stream::{
    generate_stream, load_stream_csv, read_stream_csv, save_stream_csv, write_stream_csv,
    CSV_HEADER,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator for one purpose of one round. Different
/// `(purpose, round, sub)` triples select different ChaCha streams of the
/// same seed.
pub fn keyed_rng(seed: u64, purpose: u64, round: u64, sub: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 56) ^ (round << 8) ^ sub);
    rng
}
