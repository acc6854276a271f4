//! Architecture and training hyperparameters.

use crate::error::{Error, Result};

/// Activation applied to the mean head: `tanh` bounds the means (used in the
/// time-varying regime), `identity` leaves them free (local-vol regime).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MuActivation {
    Tanh,
    Identity,
}

/// Fixed architecture description of the mixture density network.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MdnConfig {
    pub input_dim: usize,
    /// Widths of the hidden layers, input side first.
    pub hidden_sizes: Vec<usize>,
    /// Number of Gaussian components d.
    pub components: usize,
    pub mu_activation: MuActivation,
    /// Floor added to the standard-deviation head output.
    pub epsilon0: f64,
    /// Negative-side slope of the LeakyReLU hidden activation.
    pub leaky_slope: f64,
    /// Biases are fixed at zero unless explicitly made trainable.
    #[serde(default)]
    pub train_biases: bool,
}

impl MdnConfig {
    /// Published architecture: six hidden layers, ten components.
    pub fn paper_scale(input_dim: usize, mu_activation: MuActivation) -> Self {
        MdnConfig {
            input_dim,
            hidden_sizes: vec![320, 256, 256, 192, 128, 80],
            components: 10,
            mu_activation,
            epsilon0: 1e-4,
            leaky_slope: 0.01,
            train_biases: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid_input("input_dim must be >= 1"));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.iter().any(|h| *h == 0) {
            return Err(Error::invalid_input("hidden_sizes must be nonempty and positive"));
        }
        if self.components == 0 {
            return Err(Error::invalid_input("component count must be >= 1"));
        }
        if !(self.epsilon0 > 0.0 && self.epsilon0.is_finite()) {
            return Err(Error::invalid_input("epsilon0 must be > 0"));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::invalid_input("leaky_slope must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Trainable weight count (biases excluded; they are frozen by default).
    pub fn weight_count(&self) -> usize {
        let mut total = 0;
        let mut prev = self.input_dim;
        for h in &self.hidden_sizes {
            total += prev * h;
            prev = *h;
        }
        total + 3 * prev * self.components
    }
}

/// Optimization schedule: AdamW with a reduce-on-plateau learning rate.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Epochs without sufficient validation improvement before decaying eta.
    pub patience: usize,
    pub decay_factor: f64,
    /// Improvement below this does not reset the plateau counter.
    pub min_delta: f64,
    /// Training stops once a decay would push eta below this floor.
    pub min_learning_rate: f64,
    pub epochs: usize,
    pub validation_fraction: f64,
    pub seed: u64,
    /// Shuffle record order each epoch (seeded, deterministic).
    pub shuffle: bool,
    /// Fit and apply per-feature standardization before training.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 100_000,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            patience: 3,
            decay_factor: 0.5,
            min_delta: 1e-4,
            min_learning_rate: 1e-5,
            epochs: 100,
            validation_fraction: 0.1,
            seed: 0,
            shuffle: true,
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid_input("learning rate must be > 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid_input("batch size must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::invalid_input("validation fraction must lie in [0, 1)"));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return Err(Error::invalid_input("decay factor must lie in (0, 1)"));
        }
        if self.weight_decay < 0.0 || self.min_delta < 0.0 {
            return Err(Error::invalid_input("weight decay and min_delta must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid_input("Adam betas must lie in [0, 1)"));
        }
        Ok(())
    }
}
