//! Run configuration: one JSON document drives generation, training and
//! evaluation. Every tunable has an explicit default; only `regime` and
//! `seed` must be present.

use serde::{Deserialize, Serialize};

use sigmdn_core::dataset::GenerationConfig;
use sigmdn_core::eval::EvalGrid;
use sigmdn_core::mdn::{MdnConfig, MuActivation, TrainConfig};
use sigmdn_core::stochastic::ScenarioConfig;
use sigmdn_core::Regime;

/// Network shape without the input dimension (which is implied by the
/// regime, basket size and signature level).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MdnSettings {
    pub hidden_sizes: Vec<usize>,
    pub components: usize,
    /// `null` picks the regime convention: tanh for time-varying, identity
    /// for local-vol.
    pub mu_activation: Option<MuActivation>,
    pub epsilon0: f64,
    pub leaky_slope: f64,
    pub train_biases: bool,
}

impl Default for MdnSettings {
    fn default() -> Self {
        MdnSettings {
            hidden_sizes: vec![320, 256, 256, 192, 128, 80],
            components: 10,
            mu_activation: None,
            epsilon0: 1e-4,
            leaky_slope: 0.01,
            train_biases: false,
        }
    }
}

impl MdnSettings {
    pub fn to_mdn_config(&self, input_dim: usize, regime: Regime) -> MdnConfig {
        let mu_activation = self.mu_activation.unwrap_or(match regime {
            Regime::Tv => MuActivation::Tanh,
            Regime::Lv => MuActivation::Identity,
        });
        MdnConfig {
            input_dim,
            hidden_sizes: self.hidden_sizes.clone(),
            components: self.components,
            mu_activation,
            epsilon0: self.epsilon0,
            leaky_slope: self.leaky_slope,
            train_biases: self.train_biases,
        }
    }
}

/// Dataset sizing (defaults are the desk scale, not the published 20M-record
/// run; raise n1/n2 for that).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSettings {
    pub n1: usize,
    pub n2: usize,
    pub m_paths: usize,
    /// Fixed basket weights in the time-varying regime; equal if omitted.
    pub tv_weights: Option<Vec<f64>>,
}

impl Default for DatasetSettings {
    fn default() -> Self {
        DatasetSettings { n1: 200, n2: 100, m_paths: 30, tv_weights: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub regime: Regime,
    /// Master seed; flags and SIGMDN_SEED override it.
    pub seed: u64,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    /// Signature truncation level for the feature blocks.
    #[serde(default = "default_level")]
    pub level: usize,
    #[serde(default)]
    pub dataset: DatasetSettings,
    #[serde(default)]
    pub mdn: MdnSettings,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub evaluation: EvalGrid,
}

fn default_level() -> usize {
    5
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, sigmdn_core::Error> {
        let bytes = std::fs::read(path)?;
        let config: RunConfig = serde_json::from_slice(&bytes)
            .map_err(|e| sigmdn_core::Error::Config(format!("{}: {e}", path.display())))?;
        config.generation().validate().map_err(|e| {
            sigmdn_core::Error::Config(format!("{}: {e}", path.display()))
        })?;
        config.train.validate().map_err(|e| {
            sigmdn_core::Error::Config(format!("{}: {e}", path.display()))
        })?;
        Ok(config)
    }

    pub fn generation(&self) -> GenerationConfig {
        GenerationConfig {
            regime: self.regime,
            scenario: self.scenario.clone(),
            level: self.level,
            n1: self.dataset.n1,
            n2: self.dataset.n2,
            m_paths: self.dataset.m_paths,
            tv_weights: self.dataset.tv_weights.clone(),
        }
    }
}
