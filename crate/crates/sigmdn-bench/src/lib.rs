//! Benchmark-only crate; see `benches/pipeline.rs`.
//!
//! Shared fixtures for the benchmarks live here so they are compiled once.

use std::sync::Arc;

use sigmdn_core::features::{FeatureLayout, Regime};
use sigmdn_core::mdn::{MdnConfig, MdnParams, MuActivation};
use sigmdn_core::stochastic::{sample_scenario_tv, GbmScenarioTv, ScenarioConfig};
use sigmdn_core::StreamKey;

/// A deterministic two-asset market scenario at one year.
pub fn fixture_scenario() -> GbmScenarioTv {
    let mut config = ScenarioConfig::default();
    config.maturity_law.t_min = 1.0;
    config.maturity_law.t_max = 1.0;
    sample_scenario_tv(&config, StreamKey::new(17)).expect("fixture scenario")
}

/// Published-architecture network with random weights on the TV layout.
pub fn fixture_network() -> (Arc<FeatureLayout>, MdnParams) {
    let layout = Arc::new(FeatureLayout::new(Regime::Tv, 2, 5).expect("layout"));
    let config = MdnConfig::paper_scale(layout.dim(), MuActivation::Tanh);
    let params = MdnParams::init(config, StreamKey::new(3)).expect("params");
    (layout, params)
}
