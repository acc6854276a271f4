//! Model evaluation against Monte Carlo references: per-maturity KL of the
//! learned density versus a KDE of fresh MC samples, and closed-form versus
//! MC price tables with Huberized errors.

use crate::error::{Error, Result};
use crate::features::{assemble_lv, assemble_tv, Regime};
use crate::mdn::{MixtureParams, ModelArtifact};
use crate::metrics::{huberized_relative_error, kl_samples_vs_mixture};
use crate::pricing::{discount_factor, mc_price, mixture_european_price, OptionKind, OptionSpec};
use crate::rng::StreamKey;
use crate::stochastic::{
    log_basket_return, simulate_terminal_prices_lv, simulate_terminal_prices_tv, GbmScenarioLv,
    GbmScenarioTv,
};

/// Strike/maturity grid an evaluation sweeps over.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvalGrid {
    pub strikes: Vec<f64>,
    pub maturities: Vec<f64>,
}

impl Default for EvalGrid {
    fn default() -> Self {
        // 21 strikes uniform on [0.8, 1.2]; quarterly maturities.
        let strikes = (0..21).map(|i| 0.8 + 0.02 * i as f64).collect();
        EvalGrid { strikes, maturities: vec![0.25, 0.5, 0.75, 1.0] }
    }
}

/// One price comparison row.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PriceRow {
    pub maturity: f64,
    pub strike: f64,
    pub kind: OptionKind,
    pub mdn_price: f64,
    pub mc_price: f64,
    pub mc_stderr: f64,
    pub huberized_error: f64,
}

/// Distribution and pricing accuracy at one maturity.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MaturityEval {
    pub maturity: f64,
    pub kl: f64,
    pub discount: f64,
    pub prices: Vec<PriceRow>,
}

fn evaluate_at<FX, FY>(
    model: &ModelArtifact,
    grid: &EvalGrid,
    horizon: f64,
    featurize: FX,
    mc_samples: FY,
    rate_discount: impl Fn(f64) -> Result<f64>,
) -> Result<Vec<MaturityEval>>
where
    FX: Fn(f64) -> Result<Vec<f64>>,
    FY: Fn(f64) -> Result<Vec<f64>>,
{
    let mut out = Vec::new();
    for &t in &grid.maturities {
        if t > horizon + 1e-12 {
            continue;
        }
        let features = featurize(t)?;
        let mix: MixtureParams = model.predict(&features)?;
        let samples = mc_samples(t)?;
        let kl = kl_samples_vs_mixture(&samples, &mix)?;
        let discount = rate_discount(t)?;
        let mut prices = Vec::with_capacity(grid.strikes.len() * 2);
        for &strike in &grid.strikes {
            for kind in [OptionKind::Call, OptionKind::Put] {
                let spec = OptionSpec::new(kind, strike, t)?;
                let mdn = mixture_european_price(&mix, &spec, discount)?;
                let mc = mc_price(&samples, &spec, discount)?;
                prices.push(PriceRow {
                    maturity: t,
                    strike,
                    kind,
                    mdn_price: mdn.price,
                    mc_price: mc.price,
                    mc_stderr: mc.stderr.unwrap_or(0.0),
                    huberized_error: huberized_relative_error(mdn.price, mc.price),
                });
            }
        }
        out.push(MaturityEval { maturity: t, kl, discount, prices });
    }
    if out.is_empty() {
        return Err(Error::invalid_input(
            "no evaluation maturity lies within the scenario horizon",
        ));
    }
    Ok(out)
}

/// Evaluates a time-varying-regime model on one market scenario. The basket
/// weights are supplied by the caller (they are fixed per trained model, not
/// part of the conditioning vector in this regime).
pub fn evaluate_tv(
    model: &ModelArtifact,
    scenario: &GbmScenarioTv,
    weights: &[f64],
    grid: &EvalGrid,
    mc_paths: usize,
    key: StreamKey,
) -> Result<Vec<MaturityEval>> {
    if model.layout.regime != Regime::Tv {
        return Err(Error::invalid_input("model was not trained on the time-varying regime"));
    }
    let level = model.layout.level;
    let layout = std::sync::Arc::new(model.layout.clone());
    let s0 = vec![1.0; scenario.n_assets()];
    evaluate_at(
        model,
        grid,
        scenario.maturity,
        |t| Ok(assemble_tv(&scenario.at_maturity(t)?, level, &layout)?.values),
        |t| {
            let sliced = scenario.at_maturity(t)?;
            let prices = simulate_terminal_prices_tv(&sliced, mc_paths, key.child(t.to_bits()))?;
            log_basket_return(&prices, weights, &s0)
        },
        |t| discount_factor(&scenario.rate, t),
    )
}

/// Evaluates a local-volatility-regime model on one market scenario; the
/// scenario's own weights enter both the features and the MC side.
pub fn evaluate_lv(
    model: &ModelArtifact,
    scenario: &GbmScenarioLv,
    grid: &EvalGrid,
    mc_paths: usize,
    key: StreamKey,
) -> Result<Vec<MaturityEval>> {
    if model.layout.regime != Regime::Lv {
        return Err(Error::invalid_input("model was not trained on the local-vol regime"));
    }
    let level = model.layout.level;
    let layout = std::sync::Arc::new(model.layout.clone());
    let s0 = vec![1.0; scenario.n_assets()];
    evaluate_at(
        model,
        grid,
        scenario.maturity,
        |t| Ok(assemble_lv(&scenario.at_maturity(t)?, level, &layout)?.values),
        |t| {
            let sliced = scenario.at_maturity(t)?;
            let prices = simulate_terminal_prices_lv(&sliced, mc_paths, key.child(t.to_bits()))?;
            log_basket_return(&prices, &sliced.weights, &s0)
        },
        |t| discount_factor(&scenario.rate, t),
    )
}

/// Median of a sample; the mean of the two central order statistics for even
/// lengths. Empty input returns NaN.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}
