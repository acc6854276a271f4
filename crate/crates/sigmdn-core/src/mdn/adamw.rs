//! AdamW with decoupled weight decay.

use super::config::TrainConfig;
use super::network::{MdnGradients, MdnParams};

/// First/second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamwState {
    pub m: MdnGradients,
    pub v: MdnGradients,
    pub step: u64,
}

impl AdamwState {
    pub fn new(params: &MdnParams) -> Self {
        AdamwState { m: params.gradient_zeros(), v: params.gradient_zeros(), step: 0 }
    }
}

/// One AdamW update in place.
///
/// Decay is decoupled: weights shrink by `eta * lambda * w` regardless of the
/// gradient, and biases are never decayed (they are zero and frozen unless
/// `train_biases` is set).
pub fn adamw_step(
    state: &mut AdamwState,
    params: &mut MdnParams,
    grads: &MdnGradients,
    config: &TrainConfig,
    eta: f64,
) {
    state.step += 1;
    let t = state.step as f64;
    let bias1 = 1.0 - config.beta1.powf(t);
    let bias2 = 1.0 - config.beta2.powf(t);
    let train_biases = params.config.train_biases;

    for (((p, g), m), v) in params
        .tensors_mut()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut())
        .zip(state.v.tensors_mut())
    {
        for i in 0..p.w.len() {
            let grad = g.w[i];
            m.w[i] = config.beta1 * m.w[i] + (1.0 - config.beta1) * grad;
            v.w[i] = config.beta2 * v.w[i] + (1.0 - config.beta2) * grad * grad;
            let m_hat = m.w[i] / bias1;
            let v_hat = v.w[i] / bias2;
            p.w[i] -= eta * (m_hat / (v_hat.sqrt() + config.adam_eps)
                + config.weight_decay * p.w[i]);
        }
        if train_biases {
            for i in 0..p.b.len() {
                let grad = g.b[i];
                m.b[i] = config.beta1 * m.b[i] + (1.0 - config.beta1) * grad;
                v.b[i] = config.beta2 * v.b[i] + (1.0 - config.beta2) * grad * grad;
                let m_hat = m.b[i] / bias1;
                let v_hat = v.b[i] / bias2;
                p.b[i] -= eta * m_hat / (v_hat.sqrt() + config.adam_eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdn::config::{MdnConfig, MuActivation};
    use crate::rng::StreamKey;

    fn tiny() -> MdnConfig {
        MdnConfig {
            input_dim: 2,
            hidden_sizes: vec![3],
            components: 2,
            mu_activation: MuActivation::Tanh,
            epsilon0: 1e-4,
            leaky_slope: 0.01,
            train_biases: false,
        }
    }

    #[test]
    fn zero_gradient_zero_decay_is_identity() {
        let mut params = MdnParams::init(tiny(), StreamKey::new(1)).unwrap();
        let before = params.clone();
        let grads = params.gradient_zeros();
        let mut state = AdamwState::new(&params);
        let config = TrainConfig { weight_decay: 0.0, ..TrainConfig::default() };
        adamw_step(&mut state, &mut params, &grads, &config, 0.01);
        assert_eq!(params, before);
    }

    #[test]
    fn zero_gradient_decay_shrinks_weights() {
        let mut params = MdnParams::init(tiny(), StreamKey::new(2)).unwrap();
        let before = params.clone();
        let grads = params.gradient_zeros();
        let mut state = AdamwState::new(&params);
        let config = TrainConfig { weight_decay: 0.1, ..TrainConfig::default() };
        let eta = 0.01;
        adamw_step(&mut state, &mut params, &grads, &config, eta);
        for (p, q) in params.tensors().zip(before.tensors()) {
            for (a, b) in p.w.iter().zip(&q.w) {
                assert!((a - b * (1.0 - eta * 0.1)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn constant_gradient_approaches_sign_step() {
        // With a persistent gradient g, the Adam increment tends to
        // -eta * sign(g) once the moment estimates saturate.
        let mut params = MdnParams::zeros(tiny()).unwrap();
        let mut grads = params.gradient_zeros();
        for t in grads.tensors_mut() {
            for g in t.w.iter_mut() {
                *g = 0.37;
            }
        }
        let mut state = AdamwState::new(&params);
        let config = TrainConfig { weight_decay: 0.0, ..TrainConfig::default() };
        let eta = 0.01;
        let mut prev = params.trunk[0].w[0];
        for step in 0..500 {
            adamw_step(&mut state, &mut params, &grads, &config, eta);
            let cur = params.trunk[0].w[0];
            if step > 400 {
                let increment = cur - prev;
                assert!(
                    (increment + eta).abs() < 1e-4 * eta,
                    "increment {increment} vs {}",
                    -eta
                );
            }
            prev = cur;
        }
    }

    #[test]
    fn frozen_biases_never_move() {
        let mut params = MdnParams::init(tiny(), StreamKey::new(3)).unwrap();
        let mut grads = params.gradient_zeros();
        for t in grads.tensors_mut() {
            for g in t.b.iter_mut() {
                *g = 1.0;
            }
        }
        let mut state = AdamwState::new(&params);
        let config = TrainConfig::default();
        adamw_step(&mut state, &mut params, &grads, &config, 0.01);
        for t in params.tensors() {
            assert!(t.b.iter().all(|b| *b == 0.0));
        }
    }
}
