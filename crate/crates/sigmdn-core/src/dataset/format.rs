//! On-disk dataset layout.
//!
//! ```text
//! offset  0: magic "MDNSET1\0" (8 bytes)
//!         8: format version, u32 LE (currently 1)
//!        12: regime tag, u32 LE (0 = time-varying, 1 = local-vol)
//!        16: basket size N, u32 LE
//!        20: signature level l, u32 LE
//!        24: targets per record M, u32 LE
//!        28: feature_dim, u32 LE (must match the regime's count formula)
//!        32: record count, u64 LE
//!        40: generation config digest, 32 bytes (sha256 of the config JSON)
//!        72: records, contiguous f32 LE: feature_dim features then M targets
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::Regime;

use super::Dataset;

pub const DATASET_MAGIC: &[u8; 8] = b"MDNSET1\0";
pub const DATASET_VERSION: u32 = 1;

/// Self-description stored ahead of the records.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DatasetHeader {
    pub regime: Regime,
    pub n_assets: u32,
    pub level: u32,
    pub m_targets: u32,
    pub feature_dim: u32,
    pub count: u64,
    /// sha256 of the canonical generation-config JSON.
    pub config_digest: [u8; 32],
}

impl DatasetHeader {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::format("header field count: must be > 0"));
        }
        if self.n_assets == 0 || self.level == 0 || self.m_targets == 0 {
            return Err(Error::format(
                "header fields n_assets/level/m_targets: must be > 0",
            ));
        }
        let expected = self.regime.feature_dim(self.n_assets as usize, self.level as usize);
        if self.feature_dim as usize != expected {
            return Err(Error::format(format!(
                "header field feature_dim: {} does not match the {:?} formula value {} for N={}, l={}",
                self.feature_dim, self.regime, expected, self.n_assets, self.level
            )));
        }
        Ok(())
    }

    fn regime_tag(&self) -> u32 {
        match self.regime {
            Regime::Tv => 0,
            Regime::Lv => 1,
        }
    }
}

/// Writes the dataset; single-threaded append in record order, so the bytes
/// are a pure function of the dataset contents.
pub fn write(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let h = dataset.header();
    out.write_all(DATASET_MAGIC)?;
    out.write_all(&DATASET_VERSION.to_le_bytes())?;
    out.write_all(&h.regime_tag().to_le_bytes())?;
    out.write_all(&h.n_assets.to_le_bytes())?;
    out.write_all(&h.level.to_le_bytes())?;
    out.write_all(&h.m_targets.to_le_bytes())?;
    out.write_all(&h.feature_dim.to_le_bytes())?;
    out.write_all(&h.count.to_le_bytes())?;
    out.write_all(&h.config_digest)?;
    for i in 0..dataset.len() {
        for v in dataset.feature_row(i) {
            out.write_all(&v.to_le_bytes())?;
        }
        for v in dataset.target_row(i) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Dataset> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    read_exact(&mut input, &mut magic, "magic")?;
    if &magic != DATASET_MAGIC {
        return Err(Error::format(format!(
            "bad dataset magic {magic:?}, expected {DATASET_MAGIC:?}"
        )));
    }
    let version = read_u32(&mut input, "version")?;
    if version != DATASET_VERSION {
        return Err(Error::format(format!(
            "unsupported dataset version {version}, expected {DATASET_VERSION}"
        )));
    }
    let regime = match read_u32(&mut input, "regime")? {
        0 => Regime::Tv,
        1 => Regime::Lv,
        tag => return Err(Error::format(format!("header field regime: unknown tag {tag}"))),
    };
    let n_assets = read_u32(&mut input, "n_assets")?;
    let level = read_u32(&mut input, "level")?;
    let m_targets = read_u32(&mut input, "m_targets")?;
    let feature_dim = read_u32(&mut input, "feature_dim")?;
    let count = read_u64(&mut input, "count")?;
    let mut config_digest = [0u8; 32];
    read_exact(&mut input, &mut config_digest, "config_digest")?;

    let header = DatasetHeader {
        regime,
        n_assets,
        level,
        m_targets,
        feature_dim,
        count,
        config_digest,
    };
    header.validate()?;

    let n = count as usize;
    let dim = feature_dim as usize;
    let m = m_targets as usize;
    let mut features = vec![0f32; n * dim];
    let mut targets = vec![0f32; n * m];
    let mut buf = vec![0u8; (dim + m) * 4];
    for i in 0..n {
        input.read_exact(&mut buf).map_err(|e| {
            Error::format(format!("truncated dataset file inside record {i}: {e}"))
        })?;
        for (j, chunk) in buf[..dim * 4].chunks_exact(4).enumerate() {
            features[i * dim + j] = f32::from_le_bytes(chunk.try_into().unwrap());
        }
        for (j, chunk) in buf[dim * 4..].chunks_exact(4).enumerate() {
            targets[i * m + j] = f32::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(Error::format("trailing bytes after the last record"));
    }
    Dataset::from_parts(header, features, targets)
}

fn read_exact(input: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    input
        .read_exact(buf)
        .map_err(|e| Error::format(format!("truncated dataset file while reading {what}: {e}")))
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
