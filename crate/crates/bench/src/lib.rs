//! Shared helpers for the criterion benches: deterministic datasets drawn
//! from the built-in scenarios.

use clickmix_core::seq::Dataset;
use clickmix_core::simulate::{generate_scenario, ScenarioKind, ScenarioSpec};

/// One replicate of the named scenario with a pinned seed.
pub fn scenario_dataset(kind: ScenarioKind, seed: u64) -> (Dataset, Vec<usize>) {
    let mut spec = ScenarioSpec::preset(kind, seed);
    spec.replicates = 1;
    generate_scenario(&spec)
        .expect("scenario generates")
        .into_iter()
        .next()
        .expect("one replicate")
}
