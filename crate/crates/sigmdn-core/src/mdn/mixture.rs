//! The univariate Gaussian mixture emitted by the network head.

use crate::error::{Error, Result};

pub(crate) const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_74;

/// Weights, means and standard deviations of one conditional mixture.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MixtureParams {
    pub pi: Vec<f64>,
    pub mu: Vec<f64>,
    pub delta: Vec<f64>,
}

impl MixtureParams {
    pub fn new(pi: Vec<f64>, mu: Vec<f64>, delta: Vec<f64>) -> Result<Self> {
        let mix = MixtureParams { pi, mu, delta };
        mix.validate(f64::MIN_POSITIVE)?;
        Ok(mix)
    }

    pub fn components(&self) -> usize {
        self.pi.len()
    }

    /// Checks the head constraints: positive weights summing to one and
    /// standard deviations at or above the configured floor.
    pub fn validate(&self, epsilon0: f64) -> Result<()> {
        let d = self.pi.len();
        if d == 0 || self.mu.len() != d || self.delta.len() != d {
            return Err(Error::invalid_input("mixture parameter vectors must share length >= 1"));
        }
        if self.pi.iter().any(|p| !(*p > 0.0)) {
            return Err(Error::invalid_input("mixture weights must be strictly positive"));
        }
        let sum: f64 = self.pi.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid_input(format!("mixture weights sum to {sum}, expected 1")));
        }
        if self.delta.iter().any(|s| !s.is_finite() || *s < epsilon0) {
            return Err(Error::invalid_input("mixture standard deviations below floor"));
        }
        if self.mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid_input("mixture means must be finite"));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.pi.iter().zip(&self.mu).map(|(p, m)| p * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        let second: f64 = self
            .pi
            .iter()
            .zip(&self.mu)
            .zip(&self.delta)
            .map(|((p, m), s)| p * (s * s + m * m))
            .sum();
        (second - mean * mean).max(0.0)
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn pdf(&self, y: f64) -> f64 {
        self.logpdf(y).exp()
    }

    /// `log p(y)` via LogSumExp over `log pi_j + log phi_j(y)`; finite for
    /// every finite `y`, even with deviations at the floor and |y - mu| huge.
    pub fn logpdf(&self, y: f64) -> f64 {
        let mut max = f64::NEG_INFINITY;
        let mut terms = [0.0f64; 16];
        let mut heap;
        let buf: &mut [f64] = if self.pi.len() <= 16 {
            &mut terms[..self.pi.len()]
        } else {
            heap = vec![0.0; self.pi.len()];
            &mut heap
        };
        for ((slot, (p, m)), s) in buf.iter_mut().zip(self.pi.iter().zip(&self.mu)).zip(&self.delta) {
            let z = (y - m) / s;
            let t = p.ln() - s.ln() - HALF_LOG_TWO_PI - 0.5 * z * z;
            *slot = t;
            if t > max {
                max = t;
            }
        }
        if max == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let sum: f64 = buf.iter().map(|t| (t - max).exp()).sum();
        max + sum.ln()
    }
}

/// Free-function form of [`MixtureParams::logpdf`].
pub fn mixture_logpdf(mix: &MixtureParams, y: f64) -> f64 {
    mix.logpdf(y)
}
