//! Distributional and pricing accuracy metrics: Gaussian KDE of MC samples,
//! grid-discretized KL divergence and the Huberized relative price error.

use crate::error::{Error, Result};
use crate::mdn::MixtureParams;

/// Density estimates at uniform grid points `x0, x0 + dx, ...`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DensityGrid {
    pub x0: f64,
    pub dx: f64,
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn new(x0: f64, dx: f64, values: Vec<f64>) -> Result<Self> {
        if !(dx > 0.0 && dx.is_finite()) || !x0.is_finite() {
            return Err(Error::invalid_input("density grid needs finite x0 and dx > 0"));
        }
        if values.len() < 2 {
            return Err(Error::invalid_input("density grid needs at least 2 points"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid_input("densities must be finite and nonnegative"));
        }
        let grid = DensityGrid { x0, dx, values };
        let mass = grid.mass();
        if !(0.98..=1.02).contains(&mass) {
            return Err(Error::invalid_input(format!(
                "density grid mass {mass} outside [0.98, 1.02]"
            )));
        }
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    /// Trapezoid integral over the grid.
    pub fn mass(&self) -> f64 {
        let inner: f64 = self.values[1..self.values.len() - 1].iter().sum();
        (inner + 0.5 * (self.values[0] + self.values[self.values.len() - 1])) * self.dx
    }

    fn same_grid(&self, other: &DensityGrid) -> bool {
        self.values.len() == other.values.len()
            && (self.x0 - other.x0).abs() <= 1e-12 * self.x0.abs().max(1.0)
            && (self.dx - other.dx).abs() <= 1e-12 * self.dx
    }
}

/// Evaluation grid bounds and resolution for [`kde`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) || points < 2 {
            return Err(Error::invalid_input("grid spec needs lo < hi and >= 2 points"));
        }
        Ok(GridSpec { lo, hi, points })
    }
}

pub const DEFAULT_GRID_POINTS: usize = 512;

/// Silverman bandwidth with the interquartile-range guard:
/// `h = 0.9 min(std, IQR / 1.34) n^{-1/5}`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    bandwidth_from_sorted(&sorted)
}

/// Bandwidth over pre-sorted samples; all reductions run in sorted order, so
/// the estimate (and everything downstream) is permutation-invariant.
fn bandwidth_from_sorted(sorted: &[f64]) -> Result<f64> {
    if sorted.len() < 30 {
        return Err(Error::invalid_input("KDE needs at least 30 samples"));
    }
    if sorted.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid_input("KDE samples must be finite"));
    }
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();

    let quantile = |q: f64| -> f64 {
        let pos = q * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let frac = pos - lo as f64;
        if lo + 1 < sorted.len() {
            sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
        } else {
            sorted[lo]
        }
    };
    let iqr = quantile(0.75) - quantile(0.25);
    let scale = if iqr > 0.0 { std.min(iqr / 1.34) } else { std };
    if !(scale > 0.0) {
        return Err(Error::invalid_input("KDE needs samples with positive spread"));
    }
    Ok(0.9 * scale * n.powf(-0.2))
}

/// Gaussian kernel density estimate of the samples.
///
/// Without an explicit grid the support spans `[min - 4h, max + 4h]` with
/// [`DEFAULT_GRID_POINTS`] points. Kernel contributions beyond 8 bandwidths
/// are dropped (relative error < 1e-14), which keeps the evaluation linear
/// in practice via a sorted window.
pub fn kde(samples: &[f64], grid: Option<GridSpec>) -> Result<DensityGrid> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = bandwidth_from_sorted(&sorted)?;
    let spec = match grid {
        Some(g) => g,
        None => {
            GridSpec::new(
                sorted[0] - 4.0 * h,
                sorted[sorted.len() - 1] + 4.0 * h,
                DEFAULT_GRID_POINTS,
            )?
        }
    };

    let dx = (spec.hi - spec.lo) / (spec.points - 1) as f64;
    let cutoff = 8.0 * h;
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());

    let values: Vec<f64> = (0..spec.points)
        .map(|i| {
            let x = spec.lo + i as f64 * dx;
            let start = sorted.partition_point(|s| *s < x - cutoff);
            let end = sorted.partition_point(|s| *s <= x + cutoff);
            let mut acc = 0.0;
            for s in &sorted[start..end] {
                let z = (x - s) / h;
                acc += (-0.5 * z * z).exp();
            }
            acc * norm
        })
        .collect();

    DensityGrid::new(spec.lo, dx, values)
}

/// Grid KL divergence `sum_i p_i log(p_i / q_i) dx`; zero-density p terms
/// contribute nothing, and q is floored at 1e-300 inside the logarithm so
/// mixture tails cannot produce infinities.
pub fn kl_divergence(p: &DensityGrid, q: &DensityGrid) -> Result<f64> {
    if !p.same_grid(q) {
        return Err(Error::invalid_input("KL divergence needs identical grids"));
    }
    let mut acc = 0.0;
    for (pi, qi) in p.values.iter().zip(&q.values) {
        if *pi > 0.0 {
            acc += pi * (pi.ln() - qi.max(1e-300).ln());
        }
    }
    Ok(acc * p.dx)
}

/// The pricing-error metric `|P_mdn - P_mc| / (0.125% * P_mc + 0.00125)`.
pub fn huberized_relative_error(p_mdn: f64, p_mc: f64) -> f64 {
    (p_mdn - p_mc).abs() / (0.00125 * p_mc + 0.00125)
}

/// Shared evaluation grid covering both the sample range (padded by four
/// bandwidths) and the mixture's `mu +- 10 delta` range, so the KDE and the
/// model density are compared on one support.
///
/// `min_points` is a floor: the spacing is refined so the grid resolves both
/// the KDE bandwidth and the narrowest mixture component carrying weight,
/// otherwise the trapezoid mass of one of the densities degrades and the
/// unit-mass invariant of [`DensityGrid`] breaks on wide-range mixtures.
pub fn shared_grid(samples: &[f64], mix: &MixtureParams, min_points: usize) -> Result<GridSpec> {
    let h = silverman_bandwidth(samples)?;
    let s_lo = samples.iter().cloned().fold(f64::INFINITY, f64::min) - 4.0 * h;
    let s_hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 4.0 * h;
    let m_lo = mix
        .mu
        .iter()
        .zip(&mix.delta)
        .map(|(m, s)| m - 10.0 * s)
        .fold(f64::INFINITY, f64::min);
    let m_hi = mix
        .mu
        .iter()
        .zip(&mix.delta)
        .map(|(m, s)| m + 10.0 * s)
        .fold(f64::NEG_INFINITY, f64::max);
    let lo = s_lo.min(m_lo);
    let hi = s_hi.max(m_hi);

    let delta_min = mix
        .pi
        .iter()
        .zip(&mix.delta)
        .filter(|(p, _)| **p > 1e-8)
        .map(|(_, s)| *s)
        .fold(f64::INFINITY, f64::min);
    let target_dx = 0.5 * h.min(delta_min);
    let needed = ((hi - lo) / target_dx).ceil() as usize + 1;
    let points = needed.clamp(min_points, 1 << 22);
    GridSpec::new(lo, hi, points)
}

/// Mixture density evaluated on a grid (not renormalized; the grid is
/// expected to cover the support).
pub fn mixture_density_grid(mix: &MixtureParams, spec: GridSpec) -> Result<DensityGrid> {
    let dx = (spec.hi - spec.lo) / (spec.points - 1) as f64;
    let values: Vec<f64> = (0..spec.points)
        .map(|i| mix.pdf(spec.lo + i as f64 * dx))
        .collect();
    DensityGrid::new(spec.lo, dx, values)
}

/// KL(p_MC || p_MDN) of MC samples against a mixture on the shared grid.
pub fn kl_samples_vs_mixture(samples: &[f64], mix: &MixtureParams) -> Result<f64> {
    let spec = shared_grid(samples, mix, DEFAULT_GRID_POINTS)?;
    let p = kde(samples, Some(spec))?;
    let q = mixture_density_grid(mix, spec)?;
    kl_divergence(&p, &q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;
    use rand::Rng;
    use rand_distr::Distribution;

    fn normal_samples(n: usize, mean: f64, std: f64, seed: u64) -> Vec<f64> {
        let normal = rand_distr::Normal::new(mean, std).unwrap();
        let mut rng = StreamKey::new(seed).rng();
        (0..n).map(|_| normal.sample(&mut rng)).collect()
    }

    #[test]
    fn kde_recovers_standard_normal() {
        let samples = normal_samples(1_000_000, 0.0, 1.0, 7);
        let grid = kde(&samples, None).unwrap();
        let mut max_dev = 0.0f64;
        for (i, v) in grid.values.iter().enumerate() {
            let x = grid.x(i);
            let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
            max_dev = max_dev.max((v - pdf).abs());
        }
        assert!(max_dev < 0.01, "max deviation {max_dev}");
        assert!((0.99..=1.01).contains(&grid.mass()), "mass {}", grid.mass());
    }

    #[test]
    fn kde_is_translation_equivariant() {
        let samples = normal_samples(5000, 0.0, 0.3, 21);
        let shifted: Vec<f64> = samples.iter().map(|x| x + 2.5).collect();
        let a = kde(&samples, None).unwrap();
        let b = kde(&shifted, None).unwrap();
        assert!((b.x0 - a.x0 - 2.5).abs() < 1e-12);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn kde_is_permutation_invariant() {
        let samples = normal_samples(2000, 0.1, 0.2, 33);
        let mut reversed = samples.clone();
        reversed.reverse();
        assert_eq!(kde(&samples, None).unwrap(), kde(&reversed, None).unwrap());
    }

    #[test]
    fn kde_rejects_degenerate_input() {
        assert!(kde(&[0.5; 100], None).is_err());
        assert!(kde(&normal_samples(10, 0.0, 1.0, 1), None).is_err());
    }

    #[test]
    fn kl_of_identical_grids_is_zero() {
        let samples = normal_samples(5000, 0.0, 1.0, 3);
        let p = kde(&samples, None).unwrap();
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_kl_closed_form() {
        // KL(N(0,1) || N(m,1)) = m^2 / 2 on a wide fine grid.
        let m = 0.7;
        let spec = GridSpec::new(-10.0, 10.0 + m, 20_001).unwrap();
        let dx = (spec.hi - spec.lo) / (spec.points - 1) as f64;
        let grid = |mu: f64| {
            let values: Vec<f64> = (0..spec.points)
                .map(|i| {
                    let x = spec.lo + i as f64 * dx;
                    (-0.5 * (x - mu) * (x - mu)).exp() / (2.0 * std::f64::consts::PI).sqrt()
                })
                .collect();
            DensityGrid::new(spec.lo, dx, values).unwrap()
        };
        let kl = kl_divergence(&grid(0.0), &grid(m)).unwrap();
        let exact = m * m / 2.0;
        assert!((kl - exact).abs() < 0.02 * exact, "kl {kl} vs {exact}");
    }

    #[test]
    fn kl_nonnegative_after_renormalization() {
        let mut rng = StreamKey::new(77).rng();
        for _ in 0..100 {
            let n = 64;
            let dx = 0.05;
            let make = |rng: &mut rand_chacha::ChaCha8Rng| {
                let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
                let mass: f64 =
                    (raw.iter().sum::<f64>() - 0.5 * (raw[0] + raw[n - 1])) * dx;
                let values: Vec<f64> = raw.iter().map(|v| v / mass).collect();
                DensityGrid::new(0.0, dx, values).unwrap()
            };
            let p = make(&mut rng);
            let q = make(&mut rng);
            assert!(kl_divergence(&p, &q).unwrap() >= -1e-10);
        }
    }

    #[test]
    fn kl_rejects_mismatched_grids() {
        let a = DensityGrid::new(0.0, 0.1, vec![1.0; 11]).unwrap();
        let b = DensityGrid::new(0.5, 0.1, vec![1.0; 11]).unwrap();
        assert!(kl_divergence(&a, &b).is_err());
    }

    #[test]
    fn huberized_error_formula() {
        assert_eq!(huberized_relative_error(1.0, 1.0), 0.0);
        assert!((huberized_relative_error(0.00125, 0.0) - 1.0).abs() < 1e-15);
        assert!((huberized_relative_error(1.01, 1.00) - 4.0).abs() < 1e-12);
        // Continuity around equality.
        let eps = 1e-9;
        assert!(huberized_relative_error(0.5 + eps, 0.5) < 1e-5);
    }

    #[test]
    fn shared_grid_covers_mixture_and_samples() {
        let samples = normal_samples(1000, 0.0, 0.1, 5);
        let mix = MixtureParams::new(vec![1.0], vec![0.5], vec![0.2]).unwrap();
        let spec = shared_grid(&samples, &mix, 512).unwrap();
        assert!(spec.lo < -0.3);
        assert!(spec.hi > 0.5 + 10.0 * 0.2 - 1e-12);
        let q = mixture_density_grid(&mix, spec).unwrap();
        assert!((q.mass() - 1.0).abs() < 0.02);
    }
}
