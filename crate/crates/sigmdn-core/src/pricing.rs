//! European basket call/put pricing from a learned mixture density.
//!
//! The payoff is written on the gross weighted basket return: with targets
//! `y = log(sum_j w_j S_j(T) / S_j(0))` and unit initial prices, a call pays
//! `max(e^y - K, 0)` per unit notional, with the strike K in gross-return
//! units. Per Gaussian component the risk-neutral integral has a lognormal
//! closed form; an integration oracle and a plain Monte Carlo estimator
//! cross-check it.

use crate::error::{Error, Result};
use crate::mdn::MixtureParams;
use crate::stochastic::RatePath;

/// Call or put side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

impl OptionKind {
    pub fn payoff(self, y: f64, strike: f64) -> f64 {
        match self {
            OptionKind::Call => (y.exp() - strike).max(0.0),
            OptionKind::Put => (strike - y.exp()).max(0.0),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            OptionKind::Call => "call",
            OptionKind::Put => "put",
        }
    }
}

/// A European option on the gross basket return.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OptionSpec {
    pub kind: OptionKind,
    /// Strike in gross-return units (basket value relative to inception).
    pub strike: f64,
    /// Maturity in years.
    pub maturity: f64,
}

impl OptionSpec {
    pub fn new(kind: OptionKind, strike: f64, maturity: f64) -> Result<Self> {
        if !(strike > 0.0 && strike.is_finite()) {
            return Err(Error::invalid_input(format!("strike must be > 0, got {strike}")));
        }
        if !(maturity > 0.0 && maturity.is_finite()) {
            return Err(Error::invalid_input(format!("maturity must be > 0, got {maturity}")));
        }
        Ok(OptionSpec { kind, strike, maturity })
    }
}

/// How a quote was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriceMethod {
    MixtureClosedForm,
    MixtureQuadrature,
    MonteCarlo,
}

/// A price per unit notional, with a standard error when estimated by MC.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PriceQuote {
    pub price: f64,
    pub stderr: Option<f64>,
    pub method: PriceMethod,
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Discount factor `exp(-int_0^T r dt)` with the trapezoid integral of the
/// piecewise-linear rate path; reduces to `e^{-rT}` for a constant rate.
pub fn discount_factor(rate: &RatePath, maturity: f64) -> Result<f64> {
    Ok((-rate.integral_to(maturity)?).exp())
}

fn validate_pricing_inputs(mix: &MixtureParams, spec: &OptionSpec, discount: f64) -> Result<()> {
    if spec.strike <= 0.0 {
        return Err(Error::invalid_input("strike must be > 0"));
    }
    if !(discount > 0.0 && discount.is_finite()) {
        return Err(Error::invalid_input(format!("discount factor must be > 0, got {discount}")));
    }
    if mix.components() == 0 {
        return Err(Error::invalid_input("mixture must have at least one component"));
    }
    Ok(())
}

/// Mixture-implied forward gross return `sum_j pi_j e^{mu_j + delta_j^2 / 2}`.
pub fn mixture_forward(mix: &MixtureParams) -> f64 {
    mix.pi
        .iter()
        .zip(&mix.mu)
        .zip(&mix.delta)
        .map(|((p, m), s)| p * (m + 0.5 * s * s).exp())
        .sum()
}

/// Semi-closed-form price: per component j,
/// `call_j = e^{mu_j + delta_j^2/2} Phi((mu_j + delta_j^2 - ln K)/delta_j)
///           - K Phi((mu_j - ln K)/delta_j)`,
/// puts by the mirrored integrals, discounted and mixed over components.
pub fn mixture_european_price(
    mix: &MixtureParams,
    spec: &OptionSpec,
    discount: f64,
) -> Result<PriceQuote> {
    validate_pricing_inputs(mix, spec, discount)?;
    let ln_k = spec.strike.ln();
    let mut acc = 0.0;
    for ((pi, mu), delta) in mix.pi.iter().zip(&mix.mu).zip(&mix.delta) {
        let fwd = (mu + 0.5 * delta * delta).exp();
        let d1 = (mu + delta * delta - ln_k) / delta;
        let d2 = (mu - ln_k) / delta;
        let value = match spec.kind {
            OptionKind::Call => fwd * normal_cdf(d1) - spec.strike * normal_cdf(d2),
            OptionKind::Put => spec.strike * normal_cdf(-d2) - fwd * normal_cdf(-d1),
        };
        acc += pi * value;
    }
    Ok(PriceQuote {
        price: (discount * acc).max(0.0),
        stderr: None,
        method: PriceMethod::MixtureClosedForm,
    })
}

fn mixture_pdf_direct(mix: &MixtureParams, y: f64) -> f64 {
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    mix.pi
        .iter()
        .zip(&mix.mu)
        .zip(&mix.delta)
        .map(|((p, m), s)| {
            let z = (y - m) / s;
            p * norm / s * (-0.5 * z * z).exp()
        })
        .sum()
}

fn mixture_pdf_derivative(mix: &MixtureParams, y: f64) -> f64 {
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    mix.pi
        .iter()
        .zip(&mix.mu)
        .zip(&mix.delta)
        .map(|((p, m), s)| {
            let z = (y - m) / s;
            p * norm / s * (-0.5 * z * z).exp() * (m - y) / (s * s)
        })
        .sum()
}

/// Integration oracle for the closed form: the discounted payoff integral
/// over the union of component supports `[mu_j - 12 delta_j, mu_j + 12 delta_j]`,
/// restricted to the side of `ln K` where the payoff is nonzero so the
/// integrand is smooth, then composite trapezoid with the Euler-Maclaurin
/// endpoint-slope correction (the plain rule's kink/boundary term is the
/// only O(h^2) contribution once the integrand is smooth).
pub fn quadrature_price(
    mix: &MixtureParams,
    spec: &OptionSpec,
    discount: f64,
    resolution: usize,
) -> Result<PriceQuote> {
    validate_pricing_inputs(mix, spec, discount)?;
    if resolution < 16 {
        return Err(Error::invalid_input(format!(
            "quadrature resolution must be >= 16 points, got {resolution}"
        )));
    }
    let lo_hull = mix
        .mu
        .iter()
        .zip(&mix.delta)
        .map(|(m, s)| m - 12.0 * s)
        .fold(f64::INFINITY, f64::min);
    let hi_hull = mix
        .mu
        .iter()
        .zip(&mix.delta)
        .map(|(m, s)| m + 12.0 * s)
        .fold(f64::NEG_INFINITY, f64::max);
    let ln_k = spec.strike.ln();
    let (lo, hi) = match spec.kind {
        OptionKind::Call => (ln_k.max(lo_hull), hi_hull),
        OptionKind::Put => (lo_hull, ln_k.min(hi_hull)),
    };
    if lo >= hi {
        // The payoff region carries no mixture mass within the hull.
        return Ok(PriceQuote {
            price: 0.0,
            stderr: None,
            method: PriceMethod::MixtureQuadrature,
        });
    }

    let n = resolution;
    let h = (hi - lo) / (n - 1) as f64;
    let mut sum = 0.0;
    for i in 0..n {
        let y = lo + i as f64 * h;
        let f = spec.kind.payoff(y, spec.strike) * mixture_pdf_direct(mix, y);
        sum += if i == 0 || i == n - 1 { 0.5 * f } else { f };
    }
    let trapezoid = sum * h;

    // d/dy [payoff * p] at the segment ends; payoff' = +-e^y on the support.
    let slope_at = |y: f64| -> f64 {
        let p = mixture_pdf_direct(mix, y);
        let dp = mixture_pdf_derivative(mix, y);
        match spec.kind {
            OptionKind::Call => y.exp() * p + (y.exp() - spec.strike) * dp,
            OptionKind::Put => -y.exp() * p + (spec.strike - y.exp()) * dp,
        }
    };
    let corrected = trapezoid - h * h / 12.0 * (slope_at(hi) - slope_at(lo));

    Ok(PriceQuote {
        price: (discount * corrected).max(0.0),
        stderr: None,
        method: PriceMethod::MixtureQuadrature,
    })
}

/// Monte Carlo price from simulated log basket returns: discounted sample
/// mean of the payoff, with `stderr = discount * sample std / sqrt(n)`.
pub fn mc_price(y_samples: &[f64], spec: &OptionSpec, discount: f64) -> Result<PriceQuote> {
    if y_samples.len() < 2 {
        return Err(Error::invalid_input("MC pricing needs at least 2 samples"));
    }
    if spec.strike <= 0.0 {
        return Err(Error::invalid_input("strike must be > 0"));
    }
    let n = y_samples.len() as f64;
    let mut sum = 0.0;
    for y in y_samples {
        sum += spec.kind.payoff(*y, spec.strike);
    }
    let mean = sum / n;
    let mut ss = 0.0;
    for y in y_samples {
        let d = spec.kind.payoff(*y, spec.strike) - mean;
        ss += d * d;
    }
    let std = (ss / (n - 1.0)).sqrt();
    Ok(PriceQuote {
        price: discount * mean,
        stderr: Some(discount * std / n.sqrt()),
        method: PriceMethod::MonteCarlo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;
    use rand::Rng;

    fn random_mixture(d: usize, key: StreamKey) -> MixtureParams {
        let mut rng = key.rng();
        let raw: Vec<f64> = (0..d).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        MixtureParams {
            pi: raw.iter().map(|p| p / total).collect(),
            mu: (0..d).map(|_| rng.gen_range(-0.3..0.3)).collect(),
            delta: (0..d).map(|_| rng.gen_range(0.05..0.35)).collect(),
        }
    }

    #[test]
    fn discount_examples() {
        let dt = 1.0 / 252.0;
        let flat = RatePath::constant(0.05, dt, 252).unwrap();
        assert!((discount_factor(&flat, 1.0).unwrap() - (-0.05f64).exp()).abs() < 1e-12);
        let zero = RatePath::constant(0.0, dt, 252).unwrap();
        assert_eq!(discount_factor(&zero, 1.0).unwrap(), 1.0);
        let ramp_vals: Vec<f64> = (0..=252).map(|k| 0.1 * k as f64 / 252.0).collect();
        let ramp = RatePath::new(dt, ramp_vals).unwrap();
        assert!((discount_factor(&ramp, 1.0).unwrap() - (-0.05f64).exp()).abs() < 1e-6);
        assert!(discount_factor(&flat, 2.0).is_err());
    }

    #[test]
    fn near_point_mass_call_value() {
        let mix = MixtureParams::new(vec![1.0], vec![0.0], vec![1e-4]).unwrap();
        let spec = OptionSpec::new(OptionKind::Call, 0.8, 1.0).unwrap();
        let d = 0.97;
        let quote = mixture_european_price(&mix, &spec, d).unwrap();
        assert!((quote.price - d * 0.2).abs() < 1e-8);
    }

    #[test]
    fn put_call_parity_holds_exactly() {
        for seed in 0..50u64 {
            let mix = random_mixture(10, StreamKey::new(400).child(seed));
            let strike = 0.5 + 1.0 * (seed as f64 / 49.0);
            let d = 0.95;
            let call = mixture_european_price(
                &mix,
                &OptionSpec::new(OptionKind::Call, strike, 0.5).unwrap(),
                d,
            )
            .unwrap();
            let put = mixture_european_price(
                &mix,
                &OptionSpec::new(OptionKind::Put, strike, 0.5).unwrap(),
                d,
            )
            .unwrap();
            let parity = d * (mixture_forward(&mix) - strike);
            assert!(
                (call.price - put.price - parity).abs() < 1e-10,
                "parity violated at strike {strike}"
            );
        }
    }

    #[test]
    fn closed_form_matches_quadrature() {
        for seed in 0..30u64 {
            let mix = random_mixture(10, StreamKey::new(500).child(seed));
            let strike = 0.5 + (seed as f64 % 10.0) / 10.0;
            for kind in [OptionKind::Call, OptionKind::Put] {
                let spec = OptionSpec::new(kind, strike, 0.5).unwrap();
                let cf = mixture_european_price(&mix, &spec, 0.98).unwrap().price;
                let q = quadrature_price(&mix, &spec, 0.98, 32_768).unwrap().price;
                let rel = (cf - q).abs() / q.abs().max(1e-4);
                assert!(rel < 1e-8, "seed {seed} {kind:?} K={strike}: cf {cf}, quad {q}");
            }
        }
    }

    #[test]
    fn monotone_in_strike_and_bounded() {
        let mix = random_mixture(8, StreamKey::new(321));
        let d = 0.99;
        let fwd_bound = d * mixture_forward(&mix);
        let mut last_call = f64::INFINITY;
        let mut last_put = -1.0;
        for i in 0..=20 {
            let k = 0.5 + i as f64 * 0.05;
            let call = mixture_european_price(
                &mix,
                &OptionSpec::new(OptionKind::Call, k, 1.0).unwrap(),
                d,
            )
            .unwrap()
            .price;
            let put = mixture_european_price(
                &mix,
                &OptionSpec::new(OptionKind::Put, k, 1.0).unwrap(),
                d,
            )
            .unwrap()
            .price;
            assert!(call <= last_call + 1e-14);
            assert!(put >= last_put - 1e-14);
            assert!((0.0..=fwd_bound + 1e-12).contains(&call));
            assert!((0.0..=d * k + 1e-12).contains(&put));
            last_call = call;
            last_put = put;
        }
    }

    #[test]
    fn mc_agrees_with_closed_form_on_mixture_samples() {
        let mix = MixtureParams::new(
            vec![0.4, 0.6],
            vec![-0.05, 0.1],
            vec![0.15, 0.25],
        )
        .unwrap();
        let mut rng = StreamKey::new(888).rng();
        let n = 100_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let u: f64 = rng.gen();
                let j = if u < 0.4 { 0 } else { 1 };
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                mix.mu[j] + mix.delta[j] * z
            })
            .collect();
        let spec = OptionSpec::new(OptionKind::Call, 1.05, 1.0).unwrap();
        let d = 0.96;
        let mc = mc_price(&samples, &spec, d).unwrap();
        let cf = mixture_european_price(&mix, &spec, d).unwrap();
        let se = mc.stderr.unwrap();
        assert!(
            (mc.price - cf.price).abs() < 3.0 * se,
            "mc {} vs cf {} (se {se})",
            mc.price,
            cf.price
        );
    }

    #[test]
    fn degenerate_point_mass_at_the_money() {
        let spec_call = OptionSpec::new(OptionKind::Call, 1.0, 1.0).unwrap();
        let spec_put = OptionSpec::new(OptionKind::Put, 1.0, 1.0).unwrap();
        let samples = vec![0.0; 10];
        assert_eq!(mc_price(&samples, &spec_call, 1.0).unwrap().price, 0.0);
        assert_eq!(mc_price(&samples, &spec_put, 1.0).unwrap().price, 0.0);
    }

    #[test]
    fn invalid_inputs_rejected() {
        let mix = random_mixture(3, StreamKey::new(1));
        assert!(OptionSpec::new(OptionKind::Call, 0.0, 1.0).is_err());
        assert!(OptionSpec::new(OptionKind::Call, -1.0, 1.0).is_err());
        assert!(OptionSpec::new(OptionKind::Call, 1.0, 0.0).is_err());
        let spec = OptionSpec::new(OptionKind::Call, 1.0, 1.0).unwrap();
        assert!(quadrature_price(&mix, &spec, 1.0, 8).is_err());
        assert!(mc_price(&[0.1], &spec, 1.0).is_err());
    }
}
