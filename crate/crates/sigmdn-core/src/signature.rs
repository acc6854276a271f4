//! Truncated path signatures of sampled trajectories.
//!
//! The signature of a path is the sequence of its iterated integrals; level k
//! holds one coefficient per multi-index (i_1, ..., i_k). For the sampled,
//! piecewise-linear trajectories used here, the signature of one linear
//! segment is the tensor exponential of its increment, and whole-path
//! signatures follow by folding the concatenation product over segments.
//!
//! The model consumes only 1-D signatures (one per scalar rate path, l
//! features each, matching the published feature counts); the general m-D
//! machinery exists for the algebraic cross-checks and for optional
//! time-augmented features.

use crate::error::{Error, Result};
use crate::stochastic::RatePath;

/// Signature coefficients of levels 1..=level, flattened level by level.
///
/// Level k occupies `dim^k` slots ordered row-major over multi-indices
/// (last index fastest). Level 0 is identically 1 and is not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSignature {
    dim: usize,
    level: usize,
    coefficients: Vec<f64>,
}

fn coefficient_count(dim: usize, level: usize) -> usize {
    let mut total = 0usize;
    let mut block = 1usize;
    for _ in 0..level {
        block *= dim;
        total += block;
    }
    total
}

impl TruncatedSignature {
    /// Identity element of the truncated tensor algebra (signature of a
    /// constant path): level 0 = 1, all stored coefficients 0.
    pub fn identity(dim: usize, level: usize) -> Result<Self> {
        if dim == 0 || level == 0 {
            return Err(Error::invalid_input("signature needs dim >= 1 and level >= 1"));
        }
        Ok(TruncatedSignature {
            dim,
            level,
            coefficients: vec![0.0; coefficient_count(dim, level)],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Offset of the level-k block within the flat coefficient vector.
    fn level_offset(&self, k: usize) -> usize {
        coefficient_count(self.dim, k - 1)
    }

    /// The `dim^k` coefficients of level `k` (1-based).
    pub fn level_block(&self, k: usize) -> &[f64] {
        assert!(k >= 1 && k <= self.level);
        let start = self.level_offset(k);
        let len = self.dim.pow(k as u32);
        &self.coefficients[start..start + len]
    }

    fn level_block_mut(&mut self, k: usize) -> &mut [f64] {
        assert!(k >= 1 && k <= self.level);
        let start = coefficient_count(self.dim, k - 1);
        let len = self.dim.pow(k as u32);
        &mut self.coefficients[start..start + len]
    }

    pub fn max_abs(&self) -> f64 {
        self.coefficients.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }
}

/// Signature of one linear segment with the given increment: the truncated
/// tensor exponential, level-k coefficient `prod_j increment[i_j] / k!`.
pub fn signature_of_linear_segment(increment: &[f64], level: usize) -> Result<TruncatedSignature> {
    let dim = increment.len();
    let mut sig = TruncatedSignature::identity(dim, level)?;
    if increment.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid_input("segment increment must be finite"));
    }
    // Level k is the level-(k-1) tensor times increment / k.
    sig.level_block_mut(1).copy_from_slice(increment);
    for k in 2..=level {
        let prev = sig.level_block(k - 1).to_vec();
        let block = sig.level_block_mut(k);
        let inv_k = 1.0 / k as f64;
        for (a, pa) in prev.iter().enumerate() {
            for (b, inc) in increment.iter().enumerate() {
                block[a * dim + b] = pa * inc * inv_k;
            }
        }
    }
    Ok(sig)
}

/// Concatenation (Chen) product of two signatures over the same algebra:
/// level k of the result distributes over all splits of the multi-index,
/// `out_k = sum_{a+b=k} s1_a (x) s2_b`, with the implicit level-0 = 1.
pub fn chen_concat(
    s1: &TruncatedSignature,
    s2: &TruncatedSignature,
) -> Result<TruncatedSignature> {
    if s1.dim != s2.dim || s1.level != s2.level {
        return Err(Error::invalid_input(format!(
            "signature shape mismatch: ({}, {}) vs ({}, {})",
            s1.dim, s1.level, s2.dim, s2.level
        )));
    }
    let dim = s1.dim;
    let mut out = TruncatedSignature::identity(dim, s1.level)?;
    for k in 1..=s1.level {
        let mut block = vec![0.0; dim.pow(k as u32)];
        // a = 0 and b = 0 splits pick up the other factor unchanged.
        for (dst, src) in block.iter_mut().zip(s2.level_block(k)) {
            *dst += src;
        }
        for (dst, src) in block.iter_mut().zip(s1.level_block(k)) {
            *dst += src;
        }
        for a in 1..k {
            let b = k - a;
            let left = s1.level_block(a);
            let right = s2.level_block(b);
            let stride = dim.pow(b as u32);
            for (i, li) in left.iter().enumerate() {
                let row = &mut block[i * stride..(i + 1) * stride];
                for (dst, rj) in row.iter_mut().zip(right) {
                    *dst += li * rj;
                }
            }
        }
        out.level_block_mut(k).copy_from_slice(&block);
    }
    Ok(out)
}

/// Signature of a sampled path: left fold of the concatenation product over
/// the per-step linear-segment signatures.
pub fn signature_of_path(samples: &[Vec<f64>], level: usize) -> Result<TruncatedSignature> {
    if samples.len() < 2 {
        return Err(Error::invalid_input("path signature needs at least 2 sample points"));
    }
    let dim = samples[0].len();
    let mut acc = TruncatedSignature::identity(dim, level)?;
    let mut increment = vec![0.0; dim];
    for w in samples.windows(2) {
        if w[1].len() != dim {
            return Err(Error::invalid_input("path samples must share the dimension"));
        }
        for ((inc, a), b) in increment.iter_mut().zip(&w[0]).zip(&w[1]) {
            *inc = b - a;
        }
        let seg = signature_of_linear_segment(&increment, level)?;
        acc = chen_concat(&acc, &seg)?;
    }
    Ok(acc)
}

/// 1-D signature features of a scalar rate path, one per level, rescaled by
/// k! so every feature lives on the increment's own scale: feature k equals
/// `(x(T) - x(0))^k` exactly. Without the rescaling the raw coefficients
/// `delta^k / k!` decay too fast to be useful network inputs.
pub fn scalar_signature_features(path: &RatePath, level: usize) -> Result<Vec<f64>> {
    if level == 0 {
        return Err(Error::invalid_input("signature level must be >= 1"));
    }
    let delta = path.increment();
    let mut features = Vec::with_capacity(level);
    let mut power = 1.0;
    for _ in 0..level {
        power *= delta;
        features.push(power);
    }
    Ok(features)
}

/// Coefficient count of the time-augmented features below: `2^{l+1} - 2`.
pub fn time_augmented_feature_count(level: usize) -> usize {
    (2usize << level) - 2
}

/// Signature features of the time-augmented path `(t, x_t)`, all level-1..l
/// coefficients with the same k! rescaling as the scalar features. Unlike
/// the 1-D signature these see the interior shape of the trajectory, at the
/// cost of `2^{l+1} - 2` features per path instead of `l`.
pub fn time_augmented_signature_features(path: &RatePath, level: usize) -> Result<Vec<f64>> {
    let samples: Vec<Vec<f64>> = path
        .values()
        .iter()
        .enumerate()
        .map(|(k, v)| vec![k as f64 * path.dt(), *v])
        .collect();
    let sig = signature_of_path(&samples, level)?;
    let mut features = Vec::with_capacity(time_augmented_feature_count(level));
    let mut factorial = 1.0;
    for k in 1..=level {
        factorial *= k as f64;
        features.extend(sig.level_block(k).iter().map(|c| c * factorial));
    }
    Ok(features)
}
