//! Scenario input files for `price` and `evaluate`.
//!
//! A scenario is a JSON document plus a CSV of rate time series:
//!
//! ```json
//! {
//!   "id": "book-42",
//!   "rates_csv": "rates.csv",
//!   "maturity": 1.0,
//!   "correlation": { "angles": [1.35] },
//!   "weights": [0.5, 0.5],
//!   "local_vol": { "a_loc": [1.155, 0.95],
//!                  "b_loc": [0.263, 0.387],
//!                  "c_loc": [0.077, 0.145] }
//! }
//! ```
//!
//! `rates_csv` is resolved relative to the JSON file and holds columns
//! `day, r, q_1, ..., q_N[, sigma_1, ..., sigma_N]` on the uniform daily
//! grid (`dt` defaults to 1/252). `correlation` takes `angles`, an explicit
//! lower-triangular `chol`, or a full `matrix`. Sigma columns are required
//! for time-varying models, the `local_vol` block for local-vol models.

use std::path::Path;

use serde::Deserialize;

use sigmdn_core::error::{Error, Result};
use sigmdn_core::stochastic::{
    cholesky_from_angles, CholeskyFactor, GbmScenarioLv, GbmScenarioTv, LocalVolParams, RatePath,
};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioJson {
    #[serde(default)]
    id: Option<String>,
    rates_csv: String,
    maturity: f64,
    correlation: CorrelationJson,
    #[serde(default)]
    dt: Option<f64>,
    #[serde(default)]
    weights: Option<Vec<f64>>,
    #[serde(default)]
    local_vol: Option<LocalVolJson>,
}

#[derive(Debug, Clone, Deserialize)]
struct CorrelationJson {
    #[serde(default)]
    angles: Option<Vec<f64>>,
    #[serde(default)]
    chol: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Deserialize)]
struct LocalVolJson {
    a_loc: Vec<f64>,
    b_loc: Vec<f64>,
    c_loc: Vec<f64>,
}

/// A parsed scenario file; convertible into either regime's scenario when
/// the required pieces are present.
#[derive(Debug, Clone)]
pub struct ScenarioFile {
    pub id: String,
    pub rate: RatePath,
    pub dividends: Vec<RatePath>,
    pub vols: Option<Vec<RatePath>>,
    pub chol: CholeskyFactor,
    pub weights: Vec<f64>,
    pub local_vol: Option<Vec<LocalVolParams>>,
    pub maturity: f64,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let json: ScenarioJson = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let dt = json.dt.unwrap_or(1.0 / 252.0);
        if !(dt > 0.0) {
            return Err(Error::Config("scenario dt must be > 0".into()));
        }

        let csv_path = path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&json.rates_csv);
        let (rate, dividends, vols) = read_rates_csv(&csv_path, dt)?;
        let n = dividends.len();

        let chol = build_correlation(&json.correlation, n)?;
        let weights = match json.weights {
            Some(w) => {
                if w.len() != n {
                    return Err(Error::Config(format!(
                        "scenario has {n} assets but {} weights",
                        w.len()
                    )));
                }
                w
            }
            None => vec![1.0 / n as f64; n],
        };
        let local_vol = match json.local_vol {
            Some(lv) => {
                if lv.a_loc.len() != n || lv.b_loc.len() != n || lv.c_loc.len() != n {
                    return Err(Error::Config(
                        "local_vol arrays must have one entry per asset".into(),
                    ));
                }
                Some(
                    (0..n)
                        .map(|j| LocalVolParams::new(lv.a_loc[j], lv.b_loc[j], lv.c_loc[j]))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            None => None,
        };

        let id = json.id.unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "scenario".into())
        });

        Ok(ScenarioFile {
            id,
            rate,
            dividends,
            vols,
            chol,
            weights,
            local_vol,
            maturity: json.maturity,
        })
    }

    pub fn to_tv(&self) -> Result<GbmScenarioTv> {
        let vols = self.vols.clone().ok_or_else(|| {
            Error::Config("time-varying model needs sigma_* columns in the rates CSV".into())
        })?;
        GbmScenarioTv::new(
            self.rate.clone(),
            self.dividends.clone(),
            vols,
            self.chol.clone(),
            self.maturity,
        )
    }

    pub fn to_lv(&self) -> Result<GbmScenarioLv> {
        let vol = self.local_vol.clone().ok_or_else(|| {
            Error::Config("local-vol model needs the local_vol block in the scenario".into())
        })?;
        GbmScenarioLv::new(
            self.rate.clone(),
            self.dividends.clone(),
            vol,
            self.chol.clone(),
            self.weights.clone(),
            self.maturity,
        )
    }
}

fn build_correlation(json: &CorrelationJson, n: usize) -> Result<CholeskyFactor> {
    let given = [json.angles.is_some(), json.chol.is_some(), json.matrix.is_some()]
        .iter()
        .filter(|b| **b)
        .count();
    if given != 1 {
        return Err(Error::Config(
            "correlation needs exactly one of: angles, chol, matrix".into(),
        ));
    }
    let factor = if let Some(a) = &json.angles {
        cholesky_from_angles(a)?
    } else if let Some(rows) = &json.chol {
        CholeskyFactor::from_lower_triangular(rows.len(), flatten_square(rows)?)?
    } else {
        let rows = json.matrix.as_ref().unwrap();
        CholeskyFactor::from_correlation(rows.len(), &flatten_square(rows)?)?
    };
    if factor.n() != n {
        return Err(Error::Config(format!(
            "correlation is {}x{} but the rates CSV has {n} assets",
            factor.n(),
            factor.n()
        )));
    }
    Ok(factor)
}

fn flatten_square(rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = rows.len();
    let mut flat = Vec::with_capacity(n * n);
    for row in rows {
        if row.len() != n {
            return Err(Error::Config("correlation rows must form a square matrix".into()));
        }
        flat.extend_from_slice(row);
    }
    Ok(flat)
}

type RatesCsv = (RatePath, Vec<RatePath>, Option<Vec<RatePath>>);

fn read_rates_csv(path: &Path, dt: f64) -> Result<RatesCsv> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .clone();
    let names: Vec<String> = headers.iter().map(|h| h.trim().to_string()).collect();
    if names.first().map(String::as_str) != Some("day") || names.get(1).map(String::as_str) != Some("r") {
        return Err(Error::Format(format!(
            "{}: rates CSV must start with columns day, r",
            path.display()
        )));
    }
    let n_q = names.iter().filter(|h| h.starts_with("q_")).count();
    let n_sigma = names.iter().filter(|h| h.starts_with("sigma_")).count();
    if n_q == 0 {
        return Err(Error::Format(format!(
            "{}: rates CSV needs at least one q_<j> column",
            path.display()
        )));
    }
    if n_sigma != 0 && n_sigma != n_q {
        return Err(Error::Format(format!(
            "{}: found {n_sigma} sigma columns for {n_q} assets",
            path.display()
        )));
    }
    let expected_cols = 2 + n_q + n_sigma;
    if names.len() != expected_cols {
        return Err(Error::Format(format!(
            "{}: unexpected columns; want day, r, q_1..q_{n_q}[, sigma_1..sigma_{n_q}]",
            path.display()
        )));
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); 1 + n_q + n_sigma];
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if record.len() != expected_cols {
            return Err(Error::Format(format!(
                "{}: row {} has {} fields, expected {expected_cols}",
                path.display(),
                row_idx + 1,
                record.len()
            )));
        }
        let day: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("{}: bad day index in row {}", path.display(), row_idx + 1)))?;
        if day != row_idx {
            return Err(Error::Format(format!(
                "{}: day indices must be 0, 1, 2, ...; row {} has {day}",
                path.display(),
                row_idx + 1
            )));
        }
        for (c, column) in columns.iter_mut().enumerate() {
            let raw = record[c + 1].trim();
            let value: f64 = raw.parse().map_err(|_| {
                Error::Format(format!(
                    "{}: bad number {raw:?} in row {}",
                    path.display(),
                    row_idx + 1
                ))
            })?;
            column.push(value);
        }
    }

    let rate = RatePath::new(dt, columns[0].clone())?;
    let dividends = (0..n_q)
        .map(|j| RatePath::new(dt, columns[1 + j].clone()))
        .collect::<Result<Vec<_>>>()?;
    let vols = if n_sigma > 0 {
        Some(
            (0..n_sigma)
                .map(|j| RatePath::new(dt, columns[1 + n_q + j].clone()))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    Ok((rate, dividends, vols))
}
