//! Training-set generation for both volatility regimes.
//!
//! Record (i, m) derives everything from the stream key
//! `root(seed) -> record -> i -> m`: the parameter draw, and one child per
//! simulated path. Records are generated in parallel and collected in (i, m)
//! order, so the dataset bytes are identical for any thread count.

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::features::{assemble_lv, assemble_tv, FeatureLayout, Regime};
use crate::rng::StreamKey;
use crate::stochastic::{
    log_basket_return, sample_scenario_lv_at, sample_scenario_tv_at, simulate_terminal_prices_lv,
    simulate_terminal_prices_tv, GbmScenarioLv, GbmScenarioTv, ScenarioConfig,
};

use super::{Dataset, DatasetHeader};

// Stream sub-domains under the master seed.
const DOM_MATURITY: u64 = 1;
const DOM_RECORD: u64 = 2;
const DOM_PATHS: u64 = 3;

/// Everything the generators need; serialized verbatim into the manifest and
/// hashed into the dataset header.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GenerationConfig {
    pub regime: Regime,
    pub scenario: ScenarioConfig,
    /// Signature truncation level for the feature blocks.
    pub level: usize,
    /// Number of sampled maturities.
    pub n1: usize,
    /// Parameter draws per maturity.
    pub n2: usize,
    /// Simulated paths (targets) per record.
    pub m_paths: usize,
    /// Fixed basket weights. The time-varying regime always uses them
    /// (default equal); setting them for the local-vol regime replaces the
    /// flat-Dirichlet weight law with a point mass.
    pub fixed_weights: Option<Vec<f64>>,
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.n1 == 0 || self.n2 == 0 || self.m_paths == 0 {
            return Err(Error::invalid_input("n1, n2 and m_paths must be >= 1"));
        }
        if self.level == 0 {
            return Err(Error::invalid_input("signature level must be >= 1"));
        }
        if let Some(w) = &self.fixed_weights {
            if w.len() != self.scenario.n_assets {
                return Err(Error::invalid_input("fixed_weights length must match basket size"));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-12 || w.iter().any(|x| *x < 0.0) {
                return Err(Error::invalid_input(
                    "fixed_weights must be nonnegative and sum to 1",
                ));
            }
        }
        Ok(())
    }

    pub fn record_count(&self) -> usize {
        self.n1 * self.n2
    }

    /// Equal weights unless overridden.
    pub fn weights(&self) -> Vec<f64> {
        match &self.fixed_weights {
            Some(w) => w.clone(),
            None => {
                let n = self.scenario.n_assets;
                let mut w = vec![1.0 / n as f64; n];
                let sum: f64 = w.iter().sum();
                w[n - 1] += 1.0 - sum;
                w
            }
        }
    }

    /// sha256 over the canonical JSON encoding.
    pub fn digest(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("config serialization cannot fail");
        let mut hasher = Sha256::new();
        hasher.update(&json);
        hasher.finalize().into()
    }
}

fn maturity_for(config: &GenerationConfig, seed: u64, i: usize) -> f64 {
    let key = StreamKey::new(seed).child(DOM_MATURITY).child(i as u64);
    config
        .scenario
        .maturity_law
        .sample(&mut key.rng())
        .max(config.scenario.dt)
}

fn record_key(seed: u64, i: usize, m: usize) -> StreamKey {
    StreamKey::new(seed).child(DOM_RECORD).child(i as u64).child(m as u64)
}

fn paths_key(seed: u64, i: usize, m: usize) -> StreamKey {
    StreamKey::new(seed).child(DOM_PATHS).child(i as u64).child(m as u64)
}

/// The scenario record (i, m) was generated from; exposed so evaluations and
/// oracle re-simulations can reconstruct training scenarios exactly.
pub fn scenario_for_record_tv(
    config: &GenerationConfig,
    seed: u64,
    i: usize,
    m: usize,
) -> Result<GbmScenarioTv> {
    let t = maturity_for(config, seed, i);
    sample_scenario_tv_at(&config.scenario, t, record_key(seed, i, m))
}

pub fn scenario_for_record_lv(
    config: &GenerationConfig,
    seed: u64,
    i: usize,
    m: usize,
) -> Result<GbmScenarioLv> {
    let t = maturity_for(config, seed, i);
    let scenario = sample_scenario_lv_at(&config.scenario, t, record_key(seed, i, m))?;
    match &config.fixed_weights {
        Some(w) => scenario.with_weights(w.clone()),
        None => Ok(scenario),
    }
}

fn build_dataset(
    config: &GenerationConfig,
    rows: Vec<(Vec<f64>, Vec<f64>)>,
    layout: &FeatureLayout,
) -> Result<Dataset> {
    let dim = layout.dim();
    let m = config.m_paths;
    let mut features = Vec::with_capacity(rows.len() * dim);
    let mut targets = Vec::with_capacity(rows.len() * m);
    for (x, y) in rows {
        features.extend(x.iter().map(|v| *v as f32));
        targets.extend(y.iter().map(|v| *v as f32));
    }
    let header = DatasetHeader {
        regime: config.regime,
        n_assets: config.scenario.n_assets as u32,
        level: config.level as u32,
        m_targets: m as u32,
        feature_dim: dim as u32,
        count: config.record_count() as u64,
        config_digest: config.digest(),
    };
    Dataset::from_parts(header, features, targets)
}

/// Generates the time-varying training set: `n1 * n2` records, each pairing
/// the scenario's conditioning vector with `m_paths` log basket returns of
/// its own simulations.
pub fn generate_tv(config: &GenerationConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    if config.regime != Regime::Tv {
        return Err(Error::invalid_input("generate_tv needs a time-varying config"));
    }
    let layout = Arc::new(FeatureLayout::new(
        Regime::Tv,
        config.scenario.n_assets,
        config.level,
    )?);
    let weights = config.weights();
    let s0 = vec![1.0; config.scenario.n_assets];

    let rows: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..config.record_count())
        .into_par_iter()
        .map(|flat| {
            let (i, m) = (flat / config.n2, flat % config.n2);
            let scenario = scenario_for_record_tv(config, seed, i, m).map_err(|e| {
                Error::invalid_input(format!("record ({i}, {m}): {e}"))
            })?;
            let prices =
                simulate_terminal_prices_tv(&scenario, config.m_paths, paths_key(seed, i, m))?;
            let y = log_basket_return(&prices, &weights, &s0)
                .map_err(|e| Error::numeric(format!("record ({i}, {m}): {e}")))?;
            let x = assemble_tv(&scenario, config.level, &layout)?;
            Ok((x.values, y))
        })
        .collect();
    build_dataset(config, rows.into_iter().collect::<Result<Vec<_>>>()?, &layout)
}

/// Generates the local-volatility training set; basket weights are sampled
/// per record and become part of the conditioning vector.
pub fn generate_lv(config: &GenerationConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    if config.regime != Regime::Lv {
        return Err(Error::invalid_input("generate_lv needs a local-vol config"));
    }
    let layout = Arc::new(FeatureLayout::new(
        Regime::Lv,
        config.scenario.n_assets,
        config.level,
    )?);
    let s0 = vec![1.0; config.scenario.n_assets];

    let rows: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..config.record_count())
        .into_par_iter()
        .map(|flat| {
            let (i, m) = (flat / config.n2, flat % config.n2);
            let scenario = scenario_for_record_lv(config, seed, i, m).map_err(|e| {
                Error::invalid_input(format!("record ({i}, {m}): {e}"))
            })?;
            let prices =
                simulate_terminal_prices_lv(&scenario, config.m_paths, paths_key(seed, i, m))?;
            let y = log_basket_return(&prices, &scenario.weights, &s0)
                .map_err(|e| Error::numeric(format!("record ({i}, {m}): {e}")))?;
            let x = assemble_lv(&scenario, config.level, &layout)?;
            Ok((x.values, y))
        })
        .collect();
    build_dataset(config, rows.into_iter().collect::<Result<Vec<_>>>()?, &layout)
}

/// Sidecar manifest written next to every generated dataset.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DatasetManifest {
    pub config: GenerationConfig,
    pub seed: u64,
    pub record_count: usize,
    /// Hex sha256 of the config JSON, matching the binary header.
    pub config_digest: String,
}

impl DatasetManifest {
    pub fn new(config: &GenerationConfig, seed: u64) -> Self {
        let digest = config.digest();
        DatasetManifest {
            config: config.clone(),
            seed,
            record_count: config.record_count(),
            config_digest: hex_string(&digest),
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::format(format!("manifest encode: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::format(format!("manifest decode: {e}")))
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
