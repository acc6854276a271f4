//! Forward pass, exact NLL and analytic backpropagation.
//!
//! Records are processed in fixed-size chunks with a single preallocated
//! workspace; every reduction runs in record order, so losses and gradients
//! are bit-reproducible for a given batch sequence. There is no data-parallel
//! path here: training is the single-threaded reference mode.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::StreamKey;

use super::config::{MdnConfig, MuActivation};
use super::mixture::{MixtureParams, HALF_LOG_TWO_PI};

/// One dense layer; weights row-major with `rows` outputs of `cols` inputs.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Dense { rows, cols, w: vec![0.0; rows * cols], b: vec![0.0; rows] }
    }

    fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Self {
        let w = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
        Dense { rows, cols, w, b: vec![0.0; rows] }
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().chain(&self.b).all(|v| v.is_finite())
    }
}

/// All trainable parameters plus the architecture they instantiate.
///
/// Biases exist in the parameter set but stay at zero unless
/// `config.train_biases` is set; the optimizer skips them when frozen.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MdnParams {
    pub config: MdnConfig,
    pub trunk: Vec<Dense>,
    pub head_pi: Dense,
    pub head_mu: Dense,
    pub head_delta: Dense,
}

/// Gradient (or optimizer-moment) structure matching [`MdnParams`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MdnGradients {
    pub trunk: Vec<Dense>,
    pub head_pi: Dense,
    pub head_mu: Dense,
    pub head_delta: Dense,
}

impl MdnParams {
    /// LeakyReLU-scaled uniform initialization. The weight and mean heads get
    /// an extra 0.01 gain so the initial mixture is near-uniform with means
    /// near zero. The deviation head keeps the full scale: its activation
    /// `softplus(z) tanh^2(z) + eps0` collapses to the eps0 floor with a flat
    /// spot at z = 0, so tiny head weights would start every component
    /// near-degenerate and blow up the first NLL evaluations; O(1)
    /// pre-activations instead spread the initial deviations over a wide
    /// range and narrow strays get no responsibility.
    pub fn init(config: MdnConfig, key: StreamKey) -> Result<Self> {
        config.validate()?;
        let mut rng = key.rng();
        let gain = 2.0 / (1.0 + config.leaky_slope * config.leaky_slope);
        let mut trunk = Vec::with_capacity(config.hidden_sizes.len());
        let mut fan_in = config.input_dim;
        for h in &config.hidden_sizes {
            let bound = (3.0 * gain / fan_in as f64).sqrt();
            trunk.push(Dense::uniform(*h, fan_in, bound, &mut rng));
            fan_in = *h;
        }
        let base_bound = (3.0 * gain / fan_in as f64).sqrt();
        let d = config.components;
        let head_pi = Dense::uniform(d, fan_in, 0.01 * base_bound, &mut rng);
        let head_mu = Dense::uniform(d, fan_in, 0.01 * base_bound, &mut rng);
        let head_delta = Dense::uniform(d, fan_in, base_bound, &mut rng);
        Ok(MdnParams { config, trunk, head_pi, head_mu, head_delta })
    }

    /// All-zero parameters of the same architecture.
    pub fn zeros(config: MdnConfig) -> Result<Self> {
        config.validate()?;
        let mut trunk = Vec::with_capacity(config.hidden_sizes.len());
        let mut fan_in = config.input_dim;
        for h in &config.hidden_sizes {
            trunk.push(Dense::zeros(*h, fan_in));
            fan_in = *h;
        }
        let d = config.components;
        Ok(MdnParams {
            head_pi: Dense::zeros(d, fan_in),
            head_mu: Dense::zeros(d, fan_in),
            head_delta: Dense::zeros(d, fan_in),
            config,
            trunk,
        })
    }

    pub fn gradient_zeros(&self) -> MdnGradients {
        MdnGradients {
            trunk: self.trunk.iter().map(|l| Dense::zeros(l.rows, l.cols)).collect(),
            head_pi: Dense::zeros(self.head_pi.rows, self.head_pi.cols),
            head_mu: Dense::zeros(self.head_mu.rows, self.head_mu.cols),
            head_delta: Dense::zeros(self.head_delta.rows, self.head_delta.cols),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.trunk.iter().all(Dense::is_finite)
            && self.head_pi.is_finite()
            && self.head_mu.is_finite()
            && self.head_delta.is_finite()
    }

    /// Layer widths including the input: `[input, h_1, ..., h_L]`.
    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.trunk.len() + 1);
        w.push(self.config.input_dim);
        for l in &self.trunk {
            w.push(l.rows);
        }
        w
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Dense> {
        self.trunk
            .iter()
            .chain(std::iter::once(&self.head_pi))
            .chain(std::iter::once(&self.head_mu))
            .chain(std::iter::once(&self.head_delta))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.trunk
            .iter_mut()
            .chain(std::iter::once(&mut self.head_pi))
            .chain(std::iter::once(&mut self.head_mu))
            .chain(std::iter::once(&mut self.head_delta))
    }
}

impl MdnGradients {
    pub fn tensors(&self) -> impl Iterator<Item = &Dense> {
        self.trunk
            .iter()
            .chain(std::iter::once(&self.head_pi))
            .chain(std::iter::once(&self.head_mu))
            .chain(std::iter::once(&self.head_delta))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.trunk
            .iter_mut()
            .chain(std::iter::once(&mut self.head_pi))
            .chain(std::iter::once(&mut self.head_mu))
            .chain(std::iter::once(&mut self.head_delta))
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            for v in t.w.iter_mut().chain(t.b.iter_mut()) {
                *v *= factor;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .flat_map(|t| t.w.iter().chain(&t.b))
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// A borrowed batch of training records: row-major features and targets.
#[derive(Debug, Clone, Copy)]
pub struct TrainingBatch<'a> {
    pub features: &'a [f64],
    pub targets: &'a [f64],
    pub n_records: usize,
    pub feature_dim: usize,
    pub m_targets: usize,
}

impl<'a> TrainingBatch<'a> {
    pub fn new(
        features: &'a [f64],
        targets: &'a [f64],
        feature_dim: usize,
        m_targets: usize,
    ) -> Result<Self> {
        if feature_dim == 0 || m_targets == 0 {
            return Err(Error::invalid_input("batch dimensions must be positive"));
        }
        if features.len() % feature_dim != 0 || targets.len() % m_targets != 0 {
            return Err(Error::invalid_input("batch buffers do not tile into records"));
        }
        let n_records = features.len() / feature_dim;
        if n_records == 0 || targets.len() / m_targets != n_records {
            return Err(Error::invalid_input(format!(
                "batch has {} feature rows but {} target rows",
                n_records,
                targets.len() / m_targets
            )));
        }
        Ok(TrainingBatch { features, targets, n_records, feature_dim, m_targets })
    }
}

#[inline]
fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

#[inline]
fn leaky_grad(z: f64, slope: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        slope
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Standard-deviation head `softplus(z) tanh^2(z) + eps0` and its slope.
#[inline]
fn delta_head(z: f64, epsilon0: f64) -> (f64, f64) {
    let t = z.tanh();
    let sp = softplus(z);
    let value = sp * t * t + epsilon0;
    let slope = sigmoid(z) * t * t + sp * 2.0 * t * (1.0 - t * t);
    (value, slope)
}

/// `z = x W^T + b` for `n` row-major records.
fn affine_forward(layer: &Dense, x: &[f64], n: usize, z: &mut [f64]) {
    let (rows, cols) = (layer.rows, layer.cols);
    for r in 0..n {
        let xr = &x[r * cols..(r + 1) * cols];
        let zr = &mut z[r * rows..(r + 1) * rows];
        for (o, zo) in zr.iter_mut().enumerate() {
            let wrow = &layer.w[o * cols..(o + 1) * cols];
            let mut acc = layer.b[o];
            for (wi, xi) in wrow.iter().zip(xr) {
                acc += wi * xi;
            }
            *zo = acc;
        }
    }
}

/// Accumulates `grad.w += dz^T a` and `grad.b += sum_r dz` over the chunk.
fn accumulate_grads(grad: &mut Dense, dz: &[f64], a: &[f64], n: usize) {
    let (rows, cols) = (grad.rows, grad.cols);
    for r in 0..n {
        let dzr = &dz[r * rows..(r + 1) * rows];
        let ar = &a[r * cols..(r + 1) * cols];
        for (o, d) in dzr.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            let grow = &mut grad.w[o * cols..(o + 1) * cols];
            for (g, ai) in grow.iter_mut().zip(ar) {
                *g += d * ai;
            }
            grad.b[o] += d;
        }
    }
}

/// `da += dz W`, accumulating into the caller's buffer.
fn backprop_input(layer: &Dense, dz: &[f64], da: &mut [f64], n: usize) {
    let (rows, cols) = (layer.rows, layer.cols);
    for r in 0..n {
        let dzr = &dz[r * rows..(r + 1) * rows];
        let dar = &mut da[r * cols..(r + 1) * cols];
        for (o, d) in dzr.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            let wrow = &layer.w[o * cols..(o + 1) * cols];
            for (dai, wi) in dar.iter_mut().zip(wrow) {
                *dai += d * wi;
            }
        }
    }
}

/// Records per forward/backward chunk; bounds workspace memory while leaving
/// every reduction in record order.
pub(crate) const CHUNK: usize = 256;

/// Preallocated per-chunk activations and scratch.
pub(crate) struct Workspace {
    widths: Vec<usize>,
    d: usize,
    /// acts[0] is the input copy; acts[k+1] the k-th hidden activation.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of each trunk layer.
    zs: Vec<Vec<f64>>,
    z_pi: Vec<f64>,
    z_mu: Vec<f64>,
    z_delta: Vec<f64>,
    log_pi: Vec<f64>,
    pi: Vec<f64>,
    mu: Vec<f64>,
    dmu_dz: Vec<f64>,
    delta: Vec<f64>,
    ddelta_dz: Vec<f64>,
    dz_pi: Vec<f64>,
    dz_mu: Vec<f64>,
    dz_delta: Vec<f64>,
    da: Vec<f64>,
    dz: Vec<f64>,
}

impl Workspace {
    pub(crate) fn new(params: &MdnParams) -> Self {
        let widths = params.widths();
        let d = params.config.components;
        let max_w = *widths.iter().max().unwrap();
        Workspace {
            acts: widths.iter().map(|w| vec![0.0; CHUNK * w]).collect(),
            zs: widths[1..].iter().map(|w| vec![0.0; CHUNK * w]).collect(),
            z_pi: vec![0.0; CHUNK * d],
            z_mu: vec![0.0; CHUNK * d],
            z_delta: vec![0.0; CHUNK * d],
            log_pi: vec![0.0; CHUNK * d],
            pi: vec![0.0; CHUNK * d],
            mu: vec![0.0; CHUNK * d],
            dmu_dz: vec![0.0; CHUNK * d],
            delta: vec![0.0; CHUNK * d],
            ddelta_dz: vec![0.0; CHUNK * d],
            dz_pi: vec![0.0; CHUNK * d],
            dz_mu: vec![0.0; CHUNK * d],
            dz_delta: vec![0.0; CHUNK * d],
            da: vec![0.0; CHUNK * max_w],
            dz: vec![0.0; CHUNK * max_w],
            widths,
            d,
        }
    }

    /// Runs the trunk and heads for `n <= CHUNK` records.
    fn forward_chunk(&mut self, params: &MdnParams, xs: &[f64], n: usize) {
        let slope = params.config.leaky_slope;
        self.acts[0][..n * self.widths[0]].copy_from_slice(xs);
        for (k, layer) in params.trunk.iter().enumerate() {
            // Split the borrow: activations k feed pre-activations k.
            let (before, after) = self.acts.split_at_mut(k + 1);
            affine_forward(layer, &before[k], n, &mut self.zs[k]);
            let width = self.widths[k + 1];
            for (a, z) in after[0][..n * width].iter_mut().zip(&self.zs[k][..n * width]) {
                *a = leaky(*z, slope);
            }
        }
        let last = self.acts.len() - 1;
        affine_forward(&params.head_pi, &self.acts[last], n, &mut self.z_pi);
        affine_forward(&params.head_mu, &self.acts[last], n, &mut self.z_mu);
        affine_forward(&params.head_delta, &self.acts[last], n, &mut self.z_delta);

        let d = self.d;
        for r in 0..n {
            let row = r * d..(r + 1) * d;
            // log-softmax for the weights.
            let zp = &self.z_pi[row.clone()];
            let max = zp.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
            let mut sum = 0.0;
            for z in zp {
                sum += (z - max).exp();
            }
            let lse = max + sum.ln();
            for (i, z) in zp.iter().enumerate() {
                let lp = z - lse;
                self.log_pi[r * d + i] = lp;
                self.pi[r * d + i] = lp.exp();
            }
            for i in row.clone() {
                let z = self.z_mu[i];
                match params.config.mu_activation {
                    MuActivation::Tanh => {
                        let t = z.tanh();
                        self.mu[i] = t;
                        self.dmu_dz[i] = 1.0 - t * t;
                    }
                    MuActivation::Identity => {
                        self.mu[i] = z;
                        self.dmu_dz[i] = 1.0;
                    }
                }
                let (value, slope_d) = delta_head(self.z_delta[i], params.config.epsilon0);
                self.delta[i] = value;
                self.ddelta_dz[i] = slope_d;
            }
        }
    }

    /// Per-record NLL over the chunk, optionally preparing head deltas for
    /// the backward pass. Returns the summed (not averaged) loss.
    fn loss_chunk(&mut self, targets: &[f64], n: usize, m: usize, with_grads: bool) -> f64 {
        let d = self.d;
        let mut total = 0.0;
        let mut terms = vec![0.0f64; d];
        for r in 0..n {
            let log_pi = &self.log_pi[r * d..(r + 1) * d];
            let pi = &self.pi[r * d..(r + 1) * d];
            let mu = &self.mu[r * d..(r + 1) * d];
            let delta = &self.delta[r * d..(r + 1) * d];
            let mut gamma_sum = vec![0.0f64; d];
            let mut dmu_acc = vec![0.0f64; d];
            let mut ddelta_acc = vec![0.0f64; d];
            let mut loss_r = 0.0;
            for k in 0..m {
                let y = targets[r * m + k];
                let mut max = f64::NEG_INFINITY;
                for j in 0..d {
                    let z = (y - mu[j]) / delta[j];
                    let t = log_pi[j] - delta[j].ln() - HALF_LOG_TWO_PI - 0.5 * z * z;
                    terms[j] = t;
                    if t > max {
                        max = t;
                    }
                }
                let mut sum = 0.0;
                for t in &terms {
                    sum += (t - max).exp();
                }
                let logp = max + sum.ln();
                loss_r -= logp;
                if with_grads {
                    for j in 0..d {
                        let gamma = (terms[j] - logp).exp();
                        gamma_sum[j] += gamma;
                        let centered = y - mu[j];
                        dmu_acc[j] -= gamma * centered / (delta[j] * delta[j]);
                        ddelta_acc[j] -=
                            gamma * (centered * centered / delta[j].powi(3) - 1.0 / delta[j]);
                    }
                }
            }
            total += loss_r;
            if with_grads {
                for j in 0..d {
                    self.dz_pi[r * d + j] = m as f64 * pi[j] - gamma_sum[j];
                    self.dz_mu[r * d + j] = dmu_acc[j] * self.dmu_dz[r * d + j];
                    self.dz_delta[r * d + j] = ddelta_acc[j] * self.ddelta_dz[r * d + j];
                }
            }
        }
        total
    }

    /// Backpropagates the prepared head deltas into `grads` (raw sums).
    fn backward_chunk(&mut self, params: &MdnParams, grads: &mut MdnGradients, n: usize) {
        let last = self.acts.len() - 1;
        let last_width = self.widths[last];
        let slope = params.config.leaky_slope;

        accumulate_grads(&mut grads.head_pi, &self.dz_pi, &self.acts[last], n);
        accumulate_grads(&mut grads.head_mu, &self.dz_mu, &self.acts[last], n);
        accumulate_grads(&mut grads.head_delta, &self.dz_delta, &self.acts[last], n);

        let da = &mut self.da[..n * last_width];
        da.fill(0.0);
        backprop_input(&params.head_pi, &self.dz_pi, da, n);
        backprop_input(&params.head_mu, &self.dz_mu, da, n);
        backprop_input(&params.head_delta, &self.dz_delta, da, n);

        for k in (0..params.trunk.len()).rev() {
            let width = self.widths[k + 1];
            let dz = &mut self.dz[..n * width];
            for ((dst, z), d) in dz
                .iter_mut()
                .zip(&self.zs[k][..n * width])
                .zip(&self.da[..n * width])
            {
                *dst = d * leaky_grad(*z, slope);
            }
            accumulate_grads(&mut grads.trunk[k], dz, &self.acts[k], n);
            let in_width = self.widths[k];
            let da = &mut self.da[..n * in_width];
            da.fill(0.0);
            backprop_input(&params.trunk[k], &self.dz[..n * width], da, n);
        }
    }
}

fn check_batch(params: &MdnParams, batch: &TrainingBatch) -> Result<()> {
    if batch.feature_dim != params.config.input_dim {
        return Err(Error::invalid_input(format!(
            "batch feature dim {} does not match network input dim {}",
            batch.feature_dim, params.config.input_dim
        )));
    }
    Ok(())
}

/// Mean over records of the per-record NLL (sum over the record's targets).
pub fn nll_batch(params: &MdnParams, batch: &TrainingBatch) -> Result<f64> {
    check_batch(params, batch)?;
    let mut ws = Workspace::new(params);
    Ok(nll_with_workspace(params, batch, &mut ws))
}

pub(crate) fn nll_with_workspace(
    params: &MdnParams,
    batch: &TrainingBatch,
    ws: &mut Workspace,
) -> f64 {
    let mut total = 0.0;
    let dim = batch.feature_dim;
    let m = batch.m_targets;
    let mut start = 0usize;
    while start < batch.n_records {
        let n = CHUNK.min(batch.n_records - start);
        ws.forward_chunk(params, &batch.features[start * dim..(start + n) * dim], n);
        total += ws.loss_chunk(&batch.targets[start * m..(start + n) * m], n, m, false);
        start += n;
    }
    total / batch.n_records as f64
}

/// Exact gradient of [`nll_batch`] with respect to every weight and bias.
/// Returns `(loss, gradients)`; responsibilities reuse the same LogSumExp
/// stabilization as the loss itself.
pub fn gradients(params: &MdnParams, batch: &TrainingBatch) -> Result<(f64, MdnGradients)> {
    check_batch(params, batch)?;
    let mut ws = Workspace::new(params);
    let mut grads = params.gradient_zeros();
    let loss = gradients_with_workspace(params, batch, &mut ws, &mut grads);
    Ok((loss, grads))
}

pub(crate) fn gradients_with_workspace(
    params: &MdnParams,
    batch: &TrainingBatch,
    ws: &mut Workspace,
    grads: &mut MdnGradients,
) -> f64 {
    let mut total = 0.0;
    let dim = batch.feature_dim;
    let m = batch.m_targets;
    let mut start = 0usize;
    while start < batch.n_records {
        let n = CHUNK.min(batch.n_records - start);
        ws.forward_chunk(params, &batch.features[start * dim..(start + n) * dim], n);
        total += ws.loss_chunk(&batch.targets[start * m..(start + n) * m], n, m, true);
        ws.backward_chunk(params, grads, n);
        start += n;
    }
    let scale = 1.0 / batch.n_records as f64;
    grads.scale(scale);
    total * scale
}

/// Single-record forward pass producing the conditional mixture.
pub fn forward(params: &MdnParams, x: &[f64]) -> Result<MixtureParams> {
    if x.len() != params.config.input_dim {
        return Err(Error::invalid_input(format!(
            "input dim {} does not match network input dim {}",
            x.len(),
            params.config.input_dim
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite network input"));
    }
    let slope = params.config.leaky_slope;
    let mut a = x.to_vec();
    let mut z = Vec::new();
    for layer in &params.trunk {
        z.resize(layer.rows, 0.0);
        affine_forward(layer, &a, 1, &mut z);
        a.clear();
        a.extend(z.iter().map(|v| leaky(*v, slope)));
    }
    let d = params.config.components;
    let mut z_pi = vec![0.0; d];
    let mut z_mu = vec![0.0; d];
    let mut z_delta = vec![0.0; d];
    affine_forward(&params.head_pi, &a, 1, &mut z_pi);
    affine_forward(&params.head_mu, &a, 1, &mut z_mu);
    affine_forward(&params.head_delta, &a, 1, &mut z_delta);

    let max = z_pi.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let sum: f64 = z_pi.iter().map(|z| (z - max).exp()).sum();
    let lse = max + sum.ln();
    let pi: Vec<f64> = z_pi.iter().map(|z| (z - lse).exp()).collect();
    let mu: Vec<f64> = match params.config.mu_activation {
        MuActivation::Tanh => z_mu.iter().map(|z| z.tanh()).collect(),
        MuActivation::Identity => z_mu,
    };
    let delta: Vec<f64> = z_delta
        .iter()
        .map(|z| delta_head(*z, params.config.epsilon0).0)
        .collect();
    Ok(MixtureParams { pi, mu, delta })
}
