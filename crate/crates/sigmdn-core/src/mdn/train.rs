//! Maximum-likelihood training with a reduce-on-plateau schedule.
//!
//! The loop is deliberately single-threaded: batch order, reduction order and
//! optimizer updates are all fixed by the seed, so two runs with the same
//! `(data, config)` produce byte-identical histories and parameters. Resuming
//! from a checkpoint replays the exact state (optimizer moments, scheduler
//! counters, per-epoch shuffle keys), so a split run matches a monolithic one.

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::Standardization;
use crate::rng::StreamKey;

use super::adamw::{adamw_step, AdamwState};
use super::config::{MdnConfig, TrainConfig};
use super::network::{
    gradients_with_workspace, nll_with_workspace, MdnParams, TrainingBatch, Workspace,
};

/// In-memory training matrix: row-major features and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    features: Vec<f64>,
    targets: Vec<f64>,
    n_records: usize,
    feature_dim: usize,
    m_targets: usize,
}

impl TrainingData {
    pub fn new(
        features: Vec<f64>,
        targets: Vec<f64>,
        feature_dim: usize,
        m_targets: usize,
    ) -> Result<Self> {
        if feature_dim == 0 || m_targets == 0 {
            return Err(Error::invalid_input("training data dimensions must be positive"));
        }
        if features.len() % feature_dim != 0 {
            return Err(Error::invalid_input("feature buffer does not tile into records"));
        }
        let n_records = features.len() / feature_dim;
        if n_records == 0 || targets.len() != n_records * m_targets {
            return Err(Error::invalid_input(format!(
                "expected {} targets for {} records, got {}",
                n_records * m_targets,
                n_records,
                targets.len()
            )));
        }
        if features.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::invalid_input("training data must be finite"));
        }
        Ok(TrainingData { features, targets, n_records, feature_dim, m_targets })
    }

    pub fn n_records(&self) -> usize {
        self.n_records
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn m_targets(&self) -> usize {
        self.m_targets
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn target_row(&self, i: usize) -> &[f64] {
        &self.targets[i * self.m_targets..(i + 1) * self.m_targets]
    }
}

/// One line of the training history.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_nll: f64,
    pub val_nll: f64,
    pub eta: f64,
}

/// Full trainer state; serializable so a run can stop and continue exactly.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainerCheckpoint {
    pub train_config: TrainConfig,
    pub params: MdnParams,
    pub optimizer: AdamwState,
    pub eta: f64,
    pub epochs_done: usize,
    pub plateau_count: usize,
    pub best_plateau_val: f64,
    pub best_val: f64,
    pub best_params: MdnParams,
    pub best_epoch: Option<usize>,
    pub history: Vec<EpochStats>,
    pub stopped_at_floor: bool,
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss seen.
    pub best_params: MdnParams,
    pub best_epoch: Option<usize>,
    pub standardization: Standardization,
    pub history: Vec<EpochStats>,
    pub checkpoint: TrainerCheckpoint,
}

const SHUFFLE_DOMAIN: u64 = 0x5348;

fn shuffle_key(seed: u64, epoch: usize) -> StreamKey {
    StreamKey::new(seed).child(SHUFFLE_DOMAIN).child(epoch as u64)
}

/// Deterministic Fisher-Yates permutation of `0..n`.
fn permutation(n: usize, key: StreamKey) -> Vec<usize> {
    let mut rng = key.rng();
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// Validation split: the trailing `round(fraction * n)` records. A split of
/// zero records (including the single-record dataset) validates on the
/// training rows themselves.
fn split_sizes(n: usize, fraction: f64) -> (usize, usize) {
    let n_val = ((n as f64 * fraction).round() as usize).min(n - 1);
    (n - n_val, n_val)
}

struct PreparedData {
    features: Vec<f64>,
    dim: usize,
    m: usize,
    n_train: usize,
    n_val: usize,
    standardization: Standardization,
}

fn prepare(data: &TrainingData, cfg: &TrainConfig) -> PreparedData {
    let (n_train, n_val) = split_sizes(data.n_records, cfg.validation_fraction);
    let standardization = if cfg.standardize {
        Standardization::fit(
            (0..n_train).map(|i| data.feature_row(i)),
            data.feature_dim,
        )
    } else {
        Standardization::identity(data.feature_dim)
    };
    let mut features = data.features.clone();
    for row in features.chunks_mut(data.feature_dim) {
        standardization.apply(row);
    }
    PreparedData {
        features,
        dim: data.feature_dim,
        m: data.m_targets,
        n_train,
        n_val,
        standardization,
    }
}

impl PreparedData {
    fn train_row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    fn val_batch<'a>(&'a self, data: &'a TrainingData) -> TrainingBatch<'a> {
        let (start, count) = if self.n_val == 0 {
            (0, self.n_train)
        } else {
            (self.n_train, self.n_val)
        };
        TrainingBatch {
            features: &self.features[start * self.dim..(start + count) * self.dim],
            targets: &data.targets[start * self.m..(start + count) * self.m],
            n_records: count,
            feature_dim: self.dim,
            m_targets: self.m,
        }
    }
}

/// Trains a fresh network on `data`.
pub fn train(data: &TrainingData, mdn: &MdnConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    mdn.validate()?;
    cfg.validate()?;
    if mdn.input_dim != data.feature_dim {
        return Err(Error::invalid_input(format!(
            "network input dim {} does not match data feature dim {}",
            mdn.input_dim, data.feature_dim
        )));
    }
    let params = MdnParams::init(mdn.clone(), StreamKey::new(cfg.seed).child(0x494e4954))?;
    let checkpoint = TrainerCheckpoint {
        train_config: cfg.clone(),
        optimizer: AdamwState::new(&params),
        eta: cfg.learning_rate,
        epochs_done: 0,
        plateau_count: 0,
        best_plateau_val: f64::INFINITY,
        best_val: f64::INFINITY,
        best_params: params.clone(),
        best_epoch: None,
        history: Vec::new(),
        params,
        stopped_at_floor: false,
    };
    run(data, cfg, checkpoint)
}

/// Continues a checkpointed run up to `cfg.epochs` total epochs. The resumed
/// config must match the checkpointed one everywhere except the epoch budget.
pub fn resume(
    data: &TrainingData,
    cfg: &TrainConfig,
    checkpoint: TrainerCheckpoint,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut stored = checkpoint.train_config.clone();
    stored.epochs = cfg.epochs;
    if stored != *cfg {
        return Err(Error::invalid_input(
            "resume config differs from the checkpointed one beyond the epoch budget",
        ));
    }
    run(data, cfg, checkpoint)
}

fn run(data: &TrainingData, cfg: &TrainConfig, mut state: TrainerCheckpoint) -> Result<TrainOutcome> {
    let prep = prepare(data, cfg);
    let mut ws = Workspace::new(&state.params);
    let mut grads = state.params.gradient_zeros();

    let mut batch_features = vec![0.0; cfg.batch_size.min(prep.n_train) * prep.dim];
    let mut batch_targets = vec![0.0; cfg.batch_size.min(prep.n_train) * prep.m];

    while state.epochs_done < cfg.epochs && !state.stopped_at_floor {
        let epoch = state.epochs_done;
        let order = if cfg.shuffle {
            permutation(prep.n_train, shuffle_key(cfg.seed, epoch))
        } else {
            (0..prep.n_train).collect()
        };

        let eta = state.eta;
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            for (slot, &rec) in chunk.iter().enumerate() {
                batch_features[slot * prep.dim..(slot + 1) * prep.dim]
                    .copy_from_slice(prep.train_row(rec));
                batch_targets[slot * prep.m..(slot + 1) * prep.m]
                    .copy_from_slice(data.target_row(rec));
            }
            let batch = TrainingBatch {
                features: &batch_features[..chunk.len() * prep.dim],
                targets: &batch_targets[..chunk.len() * prep.m],
                n_records: chunk.len(),
                feature_dim: prep.dim,
                m_targets: prep.m,
            };
            for t in grads.tensors_mut() {
                t.w.fill(0.0);
                t.b.fill(0.0);
            }
            let loss = gradients_with_workspace(&state.params, &batch, &mut ws, &mut grads);
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!("batch loss became {loss}"),
                });
            }
            adamw_step(&mut state.optimizer, &mut state.params, &grads, cfg, eta);
            epoch_loss += loss * chunk.len() as f64;
        }
        if !state.params.is_finite() {
            return Err(Error::Training { epoch, message: "non-finite parameters".into() });
        }
        let train_nll = epoch_loss / prep.n_train as f64;
        let val_nll = nll_with_workspace(&state.params, &prep.val_batch(data), &mut ws);
        if !val_nll.is_finite() {
            return Err(Error::Training { epoch, message: format!("validation loss {val_nll}") });
        }
        state.history.push(EpochStats { epoch, train_nll, val_nll, eta });
        state.epochs_done += 1;

        if val_nll < state.best_val {
            state.best_val = val_nll;
            state.best_params = state.params.clone();
            state.best_epoch = Some(epoch);
        }
        // Plateau bookkeeping: only improvements of at least min_delta count.
        if val_nll < state.best_plateau_val - cfg.min_delta {
            state.best_plateau_val = val_nll;
            state.plateau_count = 0;
        } else {
            state.plateau_count += 1;
            if state.plateau_count >= cfg.patience {
                state.eta *= cfg.decay_factor;
                state.plateau_count = 0;
                if state.eta < cfg.min_learning_rate {
                    state.stopped_at_floor = true;
                }
            }
        }
    }

    Ok(TrainOutcome {
        best_params: state.best_params.clone(),
        best_epoch: state.best_epoch,
        standardization: prep.standardization,
        history: state.history.clone(),
        checkpoint: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdn::config::MuActivation;
    use rand_distr::Distribution;

    fn tiny_mdn(input_dim: usize, d: usize) -> MdnConfig {
        MdnConfig {
            input_dim,
            hidden_sizes: vec![16, 12],
            components: d,
            mu_activation: MuActivation::Tanh,
            epsilon0: 1e-4,
            leaky_slope: 0.01,
            train_biases: false,
        }
    }

    fn gaussian_data(n: usize, mean: f64, std: f64, seed: u64) -> TrainingData {
        let mut rng = StreamKey::new(seed).rng();
        let normal = rand_distr::Normal::new(mean, std).unwrap();
        let features: Vec<f64> = (0..n * 2)
            .map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0))
            .collect();
        let targets: Vec<f64> = (0..n * 4).map(|_| normal.sample(&mut rng)).collect();
        TrainingData::new(features, targets, 2, 4).unwrap()
    }

    #[test]
    fn zero_epoch_budget_returns_initialization() {
        let data = gaussian_data(64, 0.0, 0.1, 5);
        let cfg = TrainConfig { epochs: 0, seed: 3, ..TrainConfig::default() };
        let out = train(&data, &tiny_mdn(2, 3), &cfg).unwrap();
        assert!(out.history.is_empty());
        let init =
            MdnParams::init(tiny_mdn(2, 3), StreamKey::new(3).child(0x494e4954)).unwrap();
        assert_eq!(out.best_params, init);
    }

    #[test]
    fn unconditional_moments_are_recovered() {
        // y ~ N(0.02, 0.05^2) with the conditioning vector held constant:
        // the fitted mixture's first two moments must match the generating
        // law within 5%.
        let n = 2000usize;
        let mut rng = StreamKey::new(11).rng();
        let normal = rand_distr::Normal::new(0.02, 0.05).unwrap();
        let features: Vec<f64> = std::iter::repeat([0.3, -0.7]).take(n).flatten().collect();
        let targets: Vec<f64> = (0..n * 4).map(|_| normal.sample(&mut rng)).collect();
        let data = TrainingData::new(features, targets, 2, 4).unwrap();
        // Standardization is off: mean-centering a constant conditioning
        // vector would zero the input, and with all biases frozen at zero an
        // all-zero input pins the output at the degenerate init mixture.
        let cfg = TrainConfig {
            epochs: 150,
            batch_size: 64,
            patience: 6,
            seed: 7,
            standardize: false,
            ..TrainConfig::default()
        };
        let out = train(&data, &tiny_mdn(2, 3), &cfg).unwrap();
        let mut x = data.feature_row(17).to_vec();
        out.standardization.apply(&mut x);
        let mix = crate::mdn::forward(&out.best_params, &x).unwrap();
        assert!(
            (mix.mean() - 0.02).abs() < 0.05 * 0.02 + 0.002,
            "mean {}",
            mix.mean()
        );
        assert!((mix.std() - 0.05).abs() < 0.05 * 0.05, "std {}", mix.std());
    }

    #[test]
    fn single_record_dataset_validates_on_itself() {
        let data = TrainingData::new(vec![0.1, -0.2], vec![0.05, 0.03], 2, 2).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 4,
            seed: 1,
            ..TrainConfig::default()
        };
        let out = train(&data, &tiny_mdn(2, 2), &cfg).unwrap();
        assert_eq!(out.history.len(), 30);
        // Best-so-far validation loss is monotone nonincreasing.
        let mut best = f64::INFINITY;
        for row in &out.history {
            best = best.min(row.val_nll);
        }
        assert_eq!(best, out.history.iter().map(|r| r.val_nll).fold(f64::INFINITY, f64::min));
        assert!(out.checkpoint.best_val <= out.history[0].val_nll);
    }

    #[test]
    fn two_regime_targets_produce_distinct_conditionals() {
        // x alternates between two points; y is bimodal conditioned on x.
        let n = 3000usize;
        let mut rng = StreamKey::new(21).rng();
        let normal = rand_distr::Normal::new(0.0, 0.04).unwrap();
        let mut features = Vec::with_capacity(n * 2);
        let mut targets = Vec::with_capacity(n * 2);
        for i in 0..n {
            let flag = if i % 2 == 0 { 1.0 } else { -1.0 };
            features.extend_from_slice(&[flag, 0.5]);
            for _ in 0..2 {
                targets.push(0.2 * flag + normal.sample(&mut rng));
            }
        }
        let data = TrainingData::new(features, targets, 2, 2).unwrap();
        let cfg = TrainConfig {
            epochs: 80,
            batch_size: 500,
            seed: 2,
            ..TrainConfig::default()
        };
        let out = train(&data, &tiny_mdn(2, 4), &cfg).unwrap();
        let eval = |raw: &[f64]| {
            let mut x = raw.to_vec();
            out.standardization.apply(&mut x);
            crate::mdn::forward(&out.best_params, &x).unwrap()
        };
        let mix_a = eval(&[1.0, 0.5]);
        let mix_b = eval(&[-1.0, 0.5]);
        // Grid KL between the two learned densities.
        let (lo, hi, n_grid) = (-0.6, 0.6, 2001);
        let h = (hi - lo) / (n_grid - 1) as f64;
        let mut kl = 0.0;
        for i in 0..n_grid {
            let y = lo + i as f64 * h;
            let p = mix_a.pdf(y);
            let q = mix_b.pdf(y).max(1e-300);
            if p > 0.0 {
                kl += p * (p.ln() - q.ln()) * h;
            }
        }
        assert!(kl > 0.1, "KL between regimes {kl}");
        assert!((mix_a.mean() - 0.2).abs() < 0.05);
        assert!((mix_b.mean() + 0.2).abs() < 0.05);
    }

    #[test]
    fn histories_are_bit_identical_across_runs() {
        let data = gaussian_data(300, 0.0, 0.08, 9);
        let cfg = TrainConfig {
            epochs: 8,
            batch_size: 64,
            seed: 13,
            ..TrainConfig::default()
        };
        let a = train(&data, &tiny_mdn(2, 3), &cfg).unwrap();
        let b = train(&data, &tiny_mdn(2, 3), &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.best_params, b.best_params);
    }

    #[test]
    fn resume_matches_monolithic_run() {
        let data = gaussian_data(300, 0.01, 0.06, 15);
        let base = TrainConfig {
            epochs: 6,
            batch_size: 50,
            seed: 23,
            ..TrainConfig::default()
        };
        let full = train(&data, &tiny_mdn(2, 3), &base).unwrap();

        let short = TrainConfig { epochs: 3, ..base.clone() };
        let part1 = train(&data, &tiny_mdn(2, 3), &short).unwrap();
        let part2 = resume(&data, &base, part1.checkpoint).unwrap();
        assert_eq!(full.history, part2.history);
        assert_eq!(full.checkpoint.params, part2.checkpoint.params);
        assert_eq!(full.best_params, part2.best_params);
    }

    #[test]
    fn plateau_decay_and_floor_stop() {
        // min_delta = infinity-ish forces a plateau every epoch.
        let data = gaussian_data(100, 0.0, 0.05, 29);
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 100,
            seed: 4,
            patience: 2,
            min_delta: 1e9,
            min_learning_rate: 1e-3,
            ..TrainConfig::default()
        };
        let out = train(&data, &tiny_mdn(2, 2), &cfg).unwrap();
        // The first epoch improves on the infinite initial best, then the
        // counter saturates every `patience` epochs: eta decays after epochs
        // 2, 4, 6, ... until it crosses the floor.
        assert!(out.history.len() < 50, "run should stop at the eta floor");
        let etas: Vec<f64> = out.history.iter().map(|r| r.eta).collect();
        assert_eq!(&etas[..3], &[0.01, 0.01, 0.01]);
        assert_eq!(etas[3], 0.005);
        assert_eq!(etas[4], 0.005);
        assert_eq!(etas[5], 0.0025);
        assert!(out.checkpoint.stopped_at_floor);
    }

    #[test]
    fn mismatched_dims_rejected() {
        let data = gaussian_data(10, 0.0, 0.05, 1);
        let cfg = TrainConfig::default();
        assert!(train(&data, &tiny_mdn(3, 2), &cfg).is_err());
    }
}
