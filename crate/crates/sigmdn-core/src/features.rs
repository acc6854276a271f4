//! Conditioning-vector assembly.
//!
//! The network never sees raw trajectories; each scenario is condensed into
//! the fixed feature layout below (path means and 1-D signature features of
//! the rates, the Cholesky factor, the maturity, and in the local-vol regime
//! the weights and local-vol triples), with every entry scaled by T or
//! sqrt(T) as listed.
//!
//! Time-varying regime, in order:
//! `r_mean*T, q_j_mean*T, sigma_j_mean*sqrt(T), r_sig*T, q_j_sig*T,
//!  sigma_j_sig*T, tril(L)*sqrt(T), T`
//! (the sigma mean is sqrt(T)-scaled while the sigma signature block is
//! T-scaled; the asymmetry is intentional and kept as published).
//!
//! Local-vol regime, in order:
//! `w_j*T, r_mean*T, q_j_mean*T, r_sig*T, q_j_sig*T, a_loc_j*T, b_loc_j*T,
//!  c_loc_j*T, tril(L)*sqrt(T), T`

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::signature::{
    scalar_signature_features, time_augmented_feature_count, time_augmented_signature_features,
};
use crate::stochastic::{GbmScenarioLv, GbmScenarioTv, RatePath};

/// Which generative model produced the data a feature vector describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// GBM with CIR-driven time-varying volatility.
    Tv,
    /// GBM with parametric local volatility and sampled basket weights.
    Lv,
}

impl Regime {
    pub fn feature_dim(self, n_assets: usize, level: usize) -> usize {
        let tri = n_assets * (n_assets + 1) / 2;
        match self {
            Regime::Tv => 2 * n_assets + (1 + 2 * n_assets) * level + 2 + tri,
            Regime::Lv => 5 * n_assets + (1 + n_assets) * level + 2 + tri,
        }
    }
}

/// How each scalar rate path is condensed into signature features.
///
/// The published feature counts imply [`SignatureMode::Level`]: l features
/// per path, which for a 1-D path depend only on its endpoint increment.
/// [`SignatureMode::TimeAugmented`] instead signs the 2-D path `(t, x_t)` and
/// keeps all `2^{l+1} - 2` coefficients, capturing interior shape at the
/// cost of a different input width; it is off everywhere by default and the
/// persisted dataset format only supports the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SignatureMode {
    #[default]
    Level,
    TimeAugmented,
}

impl SignatureMode {
    pub fn per_path_features(self, level: usize) -> usize {
        match self {
            SignatureMode::Level => level,
            SignatureMode::TimeAugmented => time_augmented_feature_count(level),
        }
    }
}

/// One named contiguous block of the flat feature vector.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FeatureGroup {
    pub name: String,
    pub start: usize,
    pub end: usize,
}

/// Maps index ranges of the flat vector to named groups; serialized next to
/// datasets and models so stored features stay self-describing.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FeatureLayout {
    pub regime: Regime,
    pub n_assets: usize,
    pub level: usize,
    #[serde(default)]
    pub signature_mode: SignatureMode,
    pub groups: Vec<FeatureGroup>,
}

impl FeatureLayout {
    pub fn new(regime: Regime, n_assets: usize, level: usize) -> Result<Self> {
        FeatureLayout::with_mode(regime, n_assets, level, SignatureMode::Level)
    }

    pub fn with_mode(
        regime: Regime,
        n_assets: usize,
        level: usize,
        signature_mode: SignatureMode,
    ) -> Result<Self> {
        if n_assets == 0 || level == 0 {
            return Err(Error::invalid_input("layout needs n_assets >= 1 and level >= 1"));
        }
        let tri = n_assets * (n_assets + 1) / 2;
        let sig = signature_mode.per_path_features(level);
        let spec: Vec<(&str, usize)> = match regime {
            Regime::Tv => vec![
                ("r_mean_t", 1),
                ("q_mean_t", n_assets),
                ("sigma_mean_sqrt_t", n_assets),
                ("r_sig_t", sig),
                ("q_sig_t", n_assets * sig),
                ("sigma_sig_t", n_assets * sig),
                ("chol_sqrt_t", tri),
                ("maturity", 1),
            ],
            Regime::Lv => vec![
                ("weights_t", n_assets),
                ("r_mean_t", 1),
                ("q_mean_t", n_assets),
                ("r_sig_t", sig),
                ("q_sig_t", n_assets * sig),
                ("a_loc_t", n_assets),
                ("b_loc_t", n_assets),
                ("c_loc_t", n_assets),
                ("chol_sqrt_t", tri),
                ("maturity", 1),
            ],
        };
        let mut groups = Vec::with_capacity(spec.len());
        let mut cursor = 0usize;
        for (name, len) in spec {
            groups.push(FeatureGroup { name: name.to_string(), start: cursor, end: cursor + len });
            cursor += len;
        }
        debug_assert!(
            signature_mode != SignatureMode::Level
                || cursor == regime.feature_dim(n_assets, level)
        );
        Ok(FeatureLayout { regime, n_assets, level, signature_mode, groups })
    }

    pub fn dim(&self) -> usize {
        self.groups.last().map(|g| g.end).unwrap_or(0)
    }

    pub fn group(&self, name: &str) -> Option<&FeatureGroup> {
        self.groups.iter().find(|g| g.name == name)
    }

    /// Slice of `values` belonging to the named group.
    pub fn slice<'a>(&self, name: &str, values: &'a [f64]) -> Result<&'a [f64]> {
        let g = self
            .group(name)
            .ok_or_else(|| Error::invalid_input(format!("unknown feature group {name}")))?;
        if values.len() != self.dim() {
            return Err(Error::invalid_input(format!(
                "feature vector length {} does not match layout dim {}",
                values.len(),
                self.dim()
            )));
        }
        Ok(&values[g.start..g.end])
    }

    pub fn validate(&self) -> Result<()> {
        let rebuilt =
            FeatureLayout::with_mode(self.regime, self.n_assets, self.level, self.signature_mode)?;
        if rebuilt != *self {
            return Err(Error::format("feature layout does not match its regime formula"));
        }
        Ok(())
    }
}

/// A conditioning vector plus the layout describing it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: Arc<FeatureLayout>,
}

impl FeatureVector {
    pub fn group(&self, name: &str) -> Result<&[f64]> {
        self.layout.slice(name, &self.values)
    }
}

fn push_path_features(
    out: &mut Vec<f64>,
    path: &RatePath,
    maturity: f64,
) -> Result<()> {
    if !path.covers(maturity) {
        return Err(Error::invalid_input(format!(
            "path horizon {} shorter than maturity {maturity}",
            path.horizon()
        )));
    }
    out.push(path.mean() * maturity);
    Ok(())
}

fn push_signature_block(
    out: &mut Vec<f64>,
    path: &RatePath,
    layout: &FeatureLayout,
    scale: f64,
) -> Result<()> {
    let features = match layout.signature_mode {
        SignatureMode::Level => scalar_signature_features(path, layout.level)?,
        SignatureMode::TimeAugmented => time_augmented_signature_features(path, layout.level)?,
    };
    for f in features {
        out.push(f * scale);
    }
    Ok(())
}

/// Assembles the time-varying-regime conditioning vector.
pub fn assemble_tv(
    scenario: &GbmScenarioTv,
    level: usize,
    layout: &Arc<FeatureLayout>,
) -> Result<FeatureVector> {
    if layout.regime != Regime::Tv
        || layout.n_assets != scenario.n_assets()
        || layout.level != level
    {
        return Err(Error::invalid_input("layout does not match scenario/level"));
    }
    let t = scenario.maturity;
    let sqrt_t = t.sqrt();
    let mut values = Vec::with_capacity(layout.dim());

    push_path_features(&mut values, &scenario.rate, t)?;
    for q in &scenario.dividends {
        push_path_features(&mut values, q, t)?;
    }
    for v in &scenario.vols {
        if !v.covers(t) {
            return Err(Error::invalid_input("volatility path shorter than maturity"));
        }
        values.push(v.mean() * sqrt_t);
    }
    push_signature_block(&mut values, &scenario.rate, layout, t)?;
    for q in &scenario.dividends {
        push_signature_block(&mut values, q, layout, t)?;
    }
    for v in &scenario.vols {
        push_signature_block(&mut values, v, layout, t)?;
    }
    for l in scenario.chol.lower_triangle_row_major() {
        values.push(l * sqrt_t);
    }
    values.push(t);

    debug_assert_eq!(values.len(), layout.dim());
    Ok(FeatureVector { values, layout: Arc::clone(layout) })
}

/// Assembles the local-volatility-regime conditioning vector.
pub fn assemble_lv(
    scenario: &GbmScenarioLv,
    level: usize,
    layout: &Arc<FeatureLayout>,
) -> Result<FeatureVector> {
    if layout.regime != Regime::Lv
        || layout.n_assets != scenario.n_assets()
        || layout.level != level
    {
        return Err(Error::invalid_input("layout does not match scenario/level"));
    }
    let t = scenario.maturity;
    let sqrt_t = t.sqrt();
    let mut values = Vec::with_capacity(layout.dim());

    for w in &scenario.weights {
        values.push(w * t);
    }
    push_path_features(&mut values, &scenario.rate, t)?;
    for q in &scenario.dividends {
        push_path_features(&mut values, q, t)?;
    }
    push_signature_block(&mut values, &scenario.rate, layout, t)?;
    for q in &scenario.dividends {
        push_signature_block(&mut values, q, layout, t)?;
    }
    for p in &scenario.vol {
        values.push(p.a_loc * t);
    }
    for p in &scenario.vol {
        values.push(p.b_loc * t);
    }
    for p in &scenario.vol {
        values.push(p.c_loc * t);
    }
    for l in scenario.chol.lower_triangle_row_major() {
        values.push(l * sqrt_t);
    }
    values.push(t);

    debug_assert_eq!(values.len(), layout.dim());
    Ok(FeatureVector { values, layout: Arc::clone(layout) })
}

/// Per-feature affine standardization fitted on the training set and stored
/// with the model so inference applies the identical transform.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    /// No-op transform.
    pub fn identity(dim: usize) -> Self {
        Standardization { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    /// Fits mean and standard deviation per feature; near-constant features
    /// get unit scale so the transform stays invertible.
    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, dim: usize) -> Self {
        let mut mean = vec![0.0; dim];
        let mut count = 0usize;
        for row in rows.clone() {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += *x;
            }
            count += 1;
        }
        if count == 0 {
            return Standardization::identity(dim);
        }
        for m in &mut mean {
            *m /= count as f64;
        }
        let mut var = vec![0.0; dim];
        for row in rows {
            for ((v, m), x) in var.iter_mut().zip(&mean).zip(row) {
                *v += (*x - *m) * (*x - *m);
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = (v / count as f64).sqrt();
                if s < 1e-12 {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Standardization { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &mut [f64]) {
        for ((x, m), s) in x.iter_mut().zip(&self.mean).zip(&self.std) {
            *x = (*x - *m) / *s;
        }
    }
}
