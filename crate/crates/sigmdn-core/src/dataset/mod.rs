//! Training-set generation and persistence.
//!
//! A dataset is `n1 * n2` records: `n1` sampled maturities, `n2` parameter
//! draws each, every record pairing one conditioning vector with the `M` log
//! basket returns of its own terminal simulations. Files carry a fixed
//! binary layout (see [`format`]) plus a JSON manifest sidecar recording the
//! generation config and seed.

mod format;
mod generate;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::features::{FeatureLayout, FeatureVector};
use crate::mdn::TrainingData;

pub use format::{read, write, DatasetHeader, DATASET_MAGIC, DATASET_VERSION};
pub use generate::{
    generate_lv, generate_tv, scenario_for_record_lv, scenario_for_record_tv, DatasetManifest,
    GenerationConfig,
};

/// One conditioning vector paired with its `M` log-return targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRecord {
    pub x: FeatureVector,
    pub y: Vec<f64>,
}

/// An in-memory training set; features and targets are stored as f32 (the
/// on-disk precision) and promoted to f64 for training.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    header: DatasetHeader,
    layout: Arc<FeatureLayout>,
    features: Vec<f32>,
    targets: Vec<f32>,
}

impl Dataset {
    pub(crate) fn from_parts(
        header: DatasetHeader,
        features: Vec<f32>,
        targets: Vec<f32>,
    ) -> Result<Self> {
        header.validate()?;
        let count = header.count as usize;
        let dim = header.feature_dim as usize;
        let m = header.m_targets as usize;
        if features.len() != count * dim || targets.len() != count * m {
            return Err(Error::format(format!(
                "record buffers ({}, {}) do not match header count {count}",
                features.len(),
                targets.len()
            )));
        }
        if features.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::format("dataset contains non-finite values"));
        }
        let layout = Arc::new(FeatureLayout::new(
            header.regime,
            header.n_assets as usize,
            header.level as usize,
        )?);
        Ok(Dataset { header, layout, features, targets })
    }

    pub fn header(&self) -> &DatasetHeader {
        &self.header
    }

    pub fn layout(&self) -> &Arc<FeatureLayout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.header.count as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.header.feature_dim as usize
    }

    pub fn m_targets(&self) -> usize {
        self.header.m_targets as usize
    }

    pub fn feature_row(&self, i: usize) -> &[f32] {
        let dim = self.feature_dim();
        &self.features[i * dim..(i + 1) * dim]
    }

    pub fn target_row(&self, i: usize) -> &[f32] {
        let m = self.m_targets();
        &self.targets[i * m..(i + 1) * m]
    }

    pub fn record(&self, i: usize) -> TrainingRecord {
        TrainingRecord {
            x: FeatureVector {
                values: self.feature_row(i).iter().map(|v| *v as f64).collect(),
                layout: Arc::clone(&self.layout),
            },
            y: self.target_row(i).iter().map(|v| *v as f64).collect(),
        }
    }

    /// Promotes the stored f32 records to the f64 training matrix.
    pub fn to_training_data(&self) -> Result<TrainingData> {
        TrainingData::new(
            self.features.iter().map(|v| *v as f64).collect(),
            self.targets.iter().map(|v| *v as f64).collect(),
            self.feature_dim(),
            self.m_targets(),
        )
    }

    /// Mean of every stored target.
    pub fn target_mean(&self) -> f64 {
        self.targets.iter().map(|v| *v as f64).sum::<f64>() / self.targets.len() as f64
    }
}
