//! Scenario sampling: maturities, rate paths, correlation angles, local-vol
//! parameters and basket weights, bundled into the model-parameter sets the
//! feature assembler and simulators consume.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::StreamKey;

use super::cir::{simulate_cir, CirParams, RatePath};
use super::correlation::{cholesky_from_angles, CholeskyFactor};

/// Maturity sampling law: a Beta(1/2, 1/2)/uniform mixture mapped affinely
/// onto `[t_min, t_max]`. The arcsine component concentrates mass near both
/// boundaries; `beta_weight = 0` recovers the plain uniform law and
/// `t_min == t_max` degenerates to a point mass.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MaturityLaw {
    pub beta_weight: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl Default for MaturityLaw {
    fn default() -> Self {
        MaturityLaw { beta_weight: 0.7, t_min: 0.001, t_max: 1.05 }
    }
}

impl MaturityLaw {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta_weight) {
            return Err(Error::invalid_input("maturity beta_weight must be in [0, 1]"));
        }
        if !(self.t_min > 0.0 && self.t_min <= self.t_max && self.t_max <= 1.05) {
            return Err(Error::invalid_input(format!(
                "maturity range must satisfy 0 < t_min <= t_max <= 1.05; got [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.t_min == self.t_max {
            return self.t_min;
        }
        let pick: f64 = rng.gen();
        let u: f64 = rng.gen();
        let x = if pick < self.beta_weight {
            // Beta(1/2, 1/2) via its inverse CDF sin^2(pi u / 2).
            (std::f64::consts::FRAC_PI_2 * u).sin().powi(2)
        } else {
            u
        };
        self.t_min + x * (self.t_max - self.t_min)
    }
}

/// Sampling box for the per-asset local-volatility triples.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LocalVolBox {
    pub a_range: (f64, f64),
    pub b_range: (f64, f64),
    pub c_range: (f64, f64),
}

impl Default for LocalVolBox {
    fn default() -> Self {
        LocalVolBox {
            a_range: (0.5, 1.5),
            b_range: (0.05, 0.5),
            c_range: (0.05, 0.4),
        }
    }
}

impl LocalVolBox {
    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in [self.a_range, self.b_range, self.c_range] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::invalid_input("local-vol range must be finite with lo <= hi"));
            }
        }
        if self.b_range.0 <= 0.0 || self.c_range.0 <= 0.0 {
            return Err(Error::invalid_input("local-vol b and c must stay positive"));
        }
        Ok(())
    }
}

/// Parameters of the local-volatility function for one asset.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LocalVolParams {
    pub a_loc: f64,
    pub b_loc: f64,
    pub c_loc: f64,
}

impl LocalVolParams {
    pub fn new(a_loc: f64, b_loc: f64, c_loc: f64) -> Result<Self> {
        if !(a_loc.is_finite() && b_loc.is_finite() && c_loc.is_finite())
            || b_loc <= 0.0
            || c_loc <= 0.0
        {
            return Err(Error::invalid_input(format!(
                "local-vol parameters need finite a and positive b, c; got ({a_loc}, {b_loc}, {c_loc})"
            )));
        }
        Ok(LocalVolParams { a_loc, b_loc, c_loc })
    }
}

/// Spot-dependent volatility `c ((x - a)^2 + c)^b`; strictly positive.
pub fn local_vol(x: f64, p: &LocalVolParams) -> f64 {
    p.c_loc * ((x - p.a_loc).powi(2) + p.c_loc).powf(p.b_loc)
}

/// Model-parameter bundle for the time-varying-volatility regime.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GbmScenarioTv {
    pub rate: RatePath,
    pub dividends: Vec<RatePath>,
    pub vols: Vec<RatePath>,
    pub chol: CholeskyFactor,
    pub maturity: f64,
}

impl GbmScenarioTv {
    pub fn new(
        rate: RatePath,
        dividends: Vec<RatePath>,
        vols: Vec<RatePath>,
        chol: CholeskyFactor,
        maturity: f64,
    ) -> Result<Self> {
        let n = chol.n();
        if dividends.len() != n || vols.len() != n {
            return Err(Error::invalid_input(format!(
                "scenario needs {n} dividend and volatility paths; got {} and {}",
                dividends.len(),
                vols.len()
            )));
        }
        if !(maturity > 0.0 && maturity <= 1.05) {
            return Err(Error::invalid_input(format!(
                "maturity must lie in (0, 1.05], got {maturity}"
            )));
        }
        let dt = rate.dt();
        for p in std::iter::once(&rate).chain(&dividends).chain(&vols) {
            if (p.dt() - dt).abs() > 1e-15 {
                return Err(Error::invalid_input("all scenario paths must share dt"));
            }
            if !p.covers(maturity) {
                return Err(Error::invalid_input(format!(
                    "scenario path horizon {} does not cover maturity {maturity}",
                    p.horizon()
                )));
            }
        }
        Ok(GbmScenarioTv { rate, dividends, vols, chol, maturity })
    }

    pub fn n_assets(&self) -> usize {
        self.chol.n()
    }

    pub fn dt(&self) -> f64 {
        self.rate.dt()
    }

    /// Same market paths restricted to an earlier maturity.
    pub fn at_maturity(&self, maturity: f64) -> Result<Self> {
        GbmScenarioTv::new(
            self.rate.truncated(maturity)?,
            self.dividends.iter().map(|p| p.truncated(maturity)).collect::<Result<_>>()?,
            self.vols.iter().map(|p| p.truncated(maturity)).collect::<Result<_>>()?,
            self.chol.clone(),
            maturity,
        )
    }
}

/// Model-parameter bundle for the local-volatility regime, including the
/// basket weights that become part of the conditioning vector.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GbmScenarioLv {
    pub rate: RatePath,
    pub dividends: Vec<RatePath>,
    pub vol: Vec<LocalVolParams>,
    pub chol: CholeskyFactor,
    pub weights: Vec<f64>,
    pub maturity: f64,
}

impl GbmScenarioLv {
    pub fn new(
        rate: RatePath,
        dividends: Vec<RatePath>,
        vol: Vec<LocalVolParams>,
        chol: CholeskyFactor,
        weights: Vec<f64>,
        maturity: f64,
    ) -> Result<Self> {
        let n = chol.n();
        if dividends.len() != n || vol.len() != n || weights.len() != n {
            return Err(Error::invalid_input(
                "dividend paths, local-vol triples and weights must all have basket size",
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid_input("basket weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid_input(format!(
                "basket weights must sum to 1 within 1e-12, got {total}"
            )));
        }
        if !(maturity > 0.0 && maturity <= 1.05) {
            return Err(Error::invalid_input(format!(
                "maturity must lie in (0, 1.05], got {maturity}"
            )));
        }
        let dt = rate.dt();
        for p in std::iter::once(&rate).chain(&dividends) {
            if (p.dt() - dt).abs() > 1e-15 || !p.covers(maturity) {
                return Err(Error::invalid_input(
                    "scenario paths must share dt and cover the maturity",
                ));
            }
        }
        Ok(GbmScenarioLv { rate, dividends, vol, chol, weights, maturity })
    }

    pub fn n_assets(&self) -> usize {
        self.chol.n()
    }

    pub fn dt(&self) -> f64 {
        self.rate.dt()
    }

    pub fn at_maturity(&self, maturity: f64) -> Result<Self> {
        GbmScenarioLv::new(
            self.rate.truncated(maturity)?,
            self.dividends.iter().map(|p| p.truncated(maturity)).collect::<Result<_>>()?,
            self.vol.clone(),
            self.chol.clone(),
            self.weights.clone(),
            maturity,
        )
    }

    /// Same market, different basket composition.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        GbmScenarioLv::new(
            self.rate.clone(),
            self.dividends.clone(),
            self.vol.clone(),
            self.chol.clone(),
            weights,
            self.maturity,
        )
    }
}

/// Everything needed to draw scenarios from the training distribution.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScenarioConfig {
    pub n_assets: usize,
    /// Simulation grid step in years; 1/252 puts one step per trading day.
    pub dt: f64,
    pub rate: CirParams,
    pub dividend: CirParams,
    /// CIR law of the time-varying volatility paths (time-varying regime only).
    pub volatility: CirParams,
    pub maturity_law: MaturityLaw,
    pub local_vol: LocalVolBox,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        // CIR rows: rate 0.6/0.05/0.05 on [0.005, 0.1], dividend 0.6/0.03/0.02
        // on [0.005, 0.1], volatility 0.75/0.1/0.2 on [0.01, 0.2].
        ScenarioConfig {
            n_assets: 2,
            dt: 1.0 / 252.0,
            rate: CirParams { a: 0.6, b: 0.05, c: 0.05, x0_min: 0.005, x0_max: 0.1 },
            dividend: CirParams { a: 0.6, b: 0.03, c: 0.02, x0_min: 0.005, x0_max: 0.1 },
            volatility: CirParams { a: 0.75, b: 0.1, c: 0.2, x0_min: 0.01, x0_max: 0.2 },
            maturity_law: MaturityLaw::default(),
            local_vol: LocalVolBox::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_assets == 0 {
            return Err(Error::invalid_input("basket size must be >= 1"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid_input("dt must be positive"));
        }
        self.rate.validate()?;
        self.dividend.validate()?;
        self.volatility.validate()?;
        self.maturity_law.validate()?;
        self.local_vol.validate()
    }
}

// Child-stream indices under one scenario key.
const SUB_MATURITY: u64 = 0;
const SUB_RATE: u64 = 1;
const SUB_ANGLES: u64 = 2;
const SUB_WEIGHTS: u64 = 3;
const SUB_LOCALVOL: u64 = 4;
const SUB_DIVIDEND: u64 = 5;
const SUB_VOL: u64 = 6;

fn sample_x0(params: &CirParams, rng: &mut impl Rng) -> f64 {
    if params.x0_min == params.x0_max {
        params.x0_min
    } else {
        rng.gen_range(params.x0_min..=params.x0_max)
    }
}

fn sample_cir_path(params: &CirParams, t_end: f64, dt: f64, key: StreamKey) -> Result<RatePath> {
    let x0 = sample_x0(params, &mut key.child(0).rng());
    simulate_cir(params, x0, t_end, dt, key.child(1))
}

fn sample_angles(n: usize, key: StreamKey) -> Result<CholeskyFactor> {
    let mut rng = key.rng();
    let count = n * (n - 1) / 2;
    let mut angles = Vec::with_capacity(count);
    while angles.len() < count {
        let a: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        if a > 0.0 {
            angles.push(a);
        }
    }
    cholesky_from_angles(&angles)
}

/// Draws a maturity, then always simulates paths over at least one grid cell.
fn sample_maturity(law: &MaturityLaw, dt: f64, key: StreamKey) -> f64 {
    law.sample(&mut key.rng()).max(dt)
}

/// Draws one time-varying-volatility scenario. Deterministic given
/// `(config, key)`; sub-draws use disjoint child streams so the layout of
/// one draw never perturbs another.
pub fn sample_scenario_tv(config: &ScenarioConfig, key: StreamKey) -> Result<GbmScenarioTv> {
    let t = sample_maturity(&config.maturity_law, config.dt, key.child(SUB_MATURITY));
    sample_scenario_tv_at(config, t, key)
}

/// Time-varying scenario at an externally chosen maturity (Algorithm-style
/// generation shares one maturity across many parameter draws).
pub fn sample_scenario_tv_at(
    config: &ScenarioConfig,
    maturity: f64,
    key: StreamKey,
) -> Result<GbmScenarioTv> {
    config.validate()?;
    let t = maturity;
    let rate = sample_cir_path(&config.rate, t, config.dt, key.child(SUB_RATE))?;
    let dividends = (0..config.n_assets)
        .map(|j| sample_cir_path(&config.dividend, t, config.dt, key.child(SUB_DIVIDEND).child(j as u64)))
        .collect::<Result<Vec<_>>>()?;
    let vols = (0..config.n_assets)
        .map(|j| sample_cir_path(&config.volatility, t, config.dt, key.child(SUB_VOL).child(j as u64)))
        .collect::<Result<Vec<_>>>()?;
    let chol = sample_angles(config.n_assets, key.child(SUB_ANGLES))?;
    GbmScenarioTv::new(rate, dividends, vols, chol, t)
}

/// Draws one local-volatility scenario: CIR rate/dividend paths, angles,
/// uniform local-vol triples and flat-Dirichlet basket weights.
pub fn sample_scenario_lv(config: &ScenarioConfig, key: StreamKey) -> Result<GbmScenarioLv> {
    let t = sample_maturity(&config.maturity_law, config.dt, key.child(SUB_MATURITY));
    sample_scenario_lv_at(config, t, key)
}

/// Local-volatility scenario at an externally chosen maturity.
pub fn sample_scenario_lv_at(
    config: &ScenarioConfig,
    maturity: f64,
    key: StreamKey,
) -> Result<GbmScenarioLv> {
    config.validate()?;
    let t = maturity;
    let rate = sample_cir_path(&config.rate, t, config.dt, key.child(SUB_RATE))?;
    let dividends = (0..config.n_assets)
        .map(|j| sample_cir_path(&config.dividend, t, config.dt, key.child(SUB_DIVIDEND).child(j as u64)))
        .collect::<Result<Vec<_>>>()?;
    let chol = sample_angles(config.n_assets, key.child(SUB_ANGLES))?;

    let vol = (0..config.n_assets)
        .map(|j| {
            let mut rng = key.child(SUB_LOCALVOL).child(j as u64).rng();
            let b = &config.local_vol;
            let draw = |rng: &mut rand_chacha::ChaCha8Rng, (lo, hi): (f64, f64)| {
                if lo == hi { lo } else { rng.gen_range(lo..=hi) }
            };
            LocalVolParams::new(
                draw(&mut rng, b.a_range),
                draw(&mut rng, b.b_range),
                draw(&mut rng, b.c_range),
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let weights = sample_dirichlet_flat(config.n_assets, key.child(SUB_WEIGHTS));
    GbmScenarioLv::new(rate, dividends, vol, chol, weights, t)
}

/// Flat Dirichlet over the simplex via normalized Exp(1) draws.
pub fn sample_dirichlet_flat(n: usize, key: StreamKey) -> Vec<f64> {
    let mut rng = key.rng();
    let mut w: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            -u.ln()
        })
        .collect();
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    // Force exact unit sum so downstream invariants hold bitwise.
    let sum: f64 = w.iter().sum();
    w[n - 1] += 1.0 - sum;
    w
}
