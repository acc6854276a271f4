//! Model persistence.
//!
//! A trained model is one self-describing binary file:
//!
//! ```text
//! offset 0: magic "SMDN"
//!        4: format version, u32 LE (currently 1)
//!        8: header length H, u64 LE
//!       16: header, H bytes of UTF-8 JSON
//!            { mdn_config, feature_layout, standardization }
//!   16 + H: weight count W, u64 LE
//!   24 + H: W little-endian f64 values in canonical order
//!            (trunk layer weights then bias, layer by layer;
//!             then pi, mu, delta heads likewise)
//! ```
//!
//! Trainer checkpoints (optimizer moments, scheduler counters) are a separate
//! JSON sidecar; they are an operational convenience, not part of the model
//! interchange format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{FeatureLayout, Standardization};

use super::config::MdnConfig;
use super::network::{MdnParams, Dense};
use super::train::TrainerCheckpoint;

pub const MODEL_MAGIC: &[u8; 4] = b"SMDN";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
struct ModelHeader {
    mdn_config: MdnConfig,
    feature_layout: FeatureLayout,
    standardization: Standardization,
}

/// A trained network together with everything inference needs: the feature
/// layout it was trained against and the input standardization to replay.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub layout: FeatureLayout,
    pub standardization: Standardization,
    pub params: MdnParams,
}

impl ModelArtifact {
    pub fn new(
        layout: FeatureLayout,
        standardization: Standardization,
        params: MdnParams,
    ) -> Result<Self> {
        layout.validate()?;
        if layout.dim() != params.config.input_dim {
            return Err(Error::invalid_input(format!(
                "layout dim {} does not match network input dim {}",
                layout.dim(),
                params.config.input_dim
            )));
        }
        if standardization.dim() != layout.dim() {
            return Err(Error::invalid_input(
                "standardization dim does not match feature layout",
            ));
        }
        Ok(ModelArtifact { layout, standardization, params })
    }

    /// Standardizes raw features and runs the forward pass.
    pub fn predict(&self, raw_features: &[f64]) -> Result<super::mixture::MixtureParams> {
        let mut x = raw_features.to_vec();
        self.standardization.apply(&mut x);
        super::network::forward(&self.params, &x)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        let header = ModelHeader {
            mdn_config: self.params.config.clone(),
            feature_layout: self.layout.clone(),
            standardization: self.standardization.clone(),
        };
        let header_bytes = serde_json::to_vec(&header)
            .map_err(|e| Error::format(format!("model header encode: {e}")))?;
        out.write_all(MODEL_MAGIC)?;
        out.write_all(&MODEL_VERSION.to_le_bytes())?;
        out.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
        out.write_all(&header_bytes)?;

        let count: usize = self.params.tensors().map(|t| t.w.len() + t.b.len()).sum();
        out.write_all(&(count as u64).to_le_bytes())?;
        for tensor in self.params.tensors() {
            for v in tensor.w.iter().chain(&tensor.b) {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut input = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        read_exact(&mut input, &mut magic, "magic")?;
        if &magic != MODEL_MAGIC {
            return Err(Error::format(format!(
                "bad model magic {:?}, expected {:?}",
                magic, MODEL_MAGIC
            )));
        }
        let version = read_u32(&mut input, "version")?;
        if version != MODEL_VERSION {
            return Err(Error::format(format!(
                "unsupported model version {version}, expected {MODEL_VERSION}"
            )));
        }
        let header_len = read_u64(&mut input, "header length")? as usize;
        let mut header_bytes = vec![0u8; header_len];
        read_exact(&mut input, &mut header_bytes, "header")?;
        let header: ModelHeader = serde_json::from_slice(&header_bytes)
            .map_err(|e| Error::format(format!("model header decode: {e}")))?;
        header.mdn_config.validate()?;
        header.feature_layout.validate()?;

        let mut params = MdnParams::zeros(header.mdn_config)?;
        let expected: usize = params.tensors().map(|t| t.w.len() + t.b.len()).sum();
        let count = read_u64(&mut input, "weight count")? as usize;
        if count != expected {
            return Err(Error::format(format!(
                "model stores {count} weights, architecture needs {expected}"
            )));
        }
        for tensor in params.tensors_mut() {
            read_dense(&mut input, tensor)?;
        }
        let mut trailing = [0u8; 1];
        if input.read(&mut trailing)? != 0 {
            return Err(Error::format("trailing bytes after model weights"));
        }
        ModelArtifact::new(header.feature_layout, header.standardization, params)
    }
}

fn read_dense(input: &mut impl Read, tensor: &mut Dense) -> Result<()> {
    let mut buf = [0u8; 8];
    for v in tensor.w.iter_mut().chain(tensor.b.iter_mut()) {
        read_exact(input, &mut buf, "weight payload")?;
        *v = f64::from_le_bytes(buf);
        if !v.is_finite() {
            return Err(Error::format("non-finite weight in model file"));
        }
    }
    Ok(())
}

fn read_exact(input: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    input
        .read_exact(buf)
        .map_err(|e| Error::format(format!("truncated model file while reading {what}: {e}")))
}

fn read_u32(input: &mut impl Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(input, &mut buf, what)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(input: &mut impl Read, what: &str) -> Result<u64> {
    let mut buf = [0u8; 8];
    read_exact(input, &mut buf, what)?;
    Ok(u64::from_le_bytes(buf))
}

/// Saves the full trainer state as JSON (exact f64 round-trip).
pub fn save_checkpoint(checkpoint: &TrainerCheckpoint, path: &Path) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    serde_json::to_writer(file, checkpoint)
        .map_err(|e| Error::format(format!("checkpoint encode: {e}")))
}

pub fn load_checkpoint(path: &Path) -> Result<TrainerCheckpoint> {
    let file = BufReader::new(File::open(path)?);
    serde_json::from_reader(file).map_err(|e| Error::format(format!("checkpoint decode: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Regime;
    use crate::mdn::config::MuActivation;
    use crate::rng::StreamKey;

    fn artifact() -> ModelArtifact {
        let layout = FeatureLayout::new(Regime::Tv, 2, 5).unwrap();
        let config = MdnConfig {
            input_dim: layout.dim(),
            hidden_sizes: vec![16, 8],
            components: 4,
            mu_activation: MuActivation::Tanh,
            epsilon0: 1e-4,
            leaky_slope: 0.01,
            train_biases: false,
        };
        let params = MdnParams::init(config, StreamKey::new(17)).unwrap();
        let st = Standardization::identity(layout.dim());
        ModelArtifact::new(layout, st, params).unwrap()
    }

    #[test]
    fn model_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.smdn");
        let a = artifact();
        a.save(&path).unwrap();
        let b = ModelArtifact::load(&path).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truncated_and_corrupt_files_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.smdn");
        let a = artifact();
        a.save(&path).unwrap();

        let bytes = std::fs::read(&path).unwrap();
        let cut = dir.path().join("cut.smdn");
        std::fs::write(&cut, &bytes[..bytes.len() - 9]).unwrap();
        match ModelArtifact::load(&cut) {
            Err(Error::Format(msg)) => assert!(msg.contains("truncated")),
            other => panic!("expected format error, got {other:?}"),
        }

        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        let bad = dir.path().join("bad.smdn");
        std::fs::write(&bad, &wrong).unwrap();
        assert!(matches!(ModelArtifact::load(&bad), Err(Error::Format(_))));
    }
}
