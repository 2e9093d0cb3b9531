//! Shared fixtures for the benchmarks.

use medpath_core::simulation::{generate, ScenarioConfig};
use medpath_core::{Dataset, Model, ThetaVector};

pub struct Fixture {
    pub scenario: ScenarioConfig,
    pub model: Model,
    pub data: Dataset,
    pub theta: ThetaVector,
}

/// Simulated cohort of `n` subjects from a published scenario preset.
pub fn fixture(preset: &str, with_confounder: bool, n: usize, seed: u64) -> Fixture {
    let mut scenario = ScenarioConfig::preset(preset, with_confounder).expect("known preset");
    scenario.n = n;
    let model = scenario.model().expect("valid model");
    let data = generate(&scenario, seed).expect("generation succeeds");
    let theta = scenario.theta_true(&model).expect("complete theta");
    Fixture {
        scenario,
        model,
        data,
        theta,
    }
}
