//! Cox-Ingersoll-Ross simulation of time-varying market rates.
//!
//! Interest rates, dividend yields and (in the time-varying regime)
//! volatilities are all driven by the square-root diffusion
//! `dX = a(b - X) dt + c sqrt(X) dW`, discretized with the full-truncation
//! Euler scheme: drift and diffusion evaluate `sqrt(max(X, 0))`, so sampled
//! levels stay nonnegative for every step and seed.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::StreamKey;

/// Parameters of one CIR process plus the admissible range of its initial value.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CirParams {
    /// Mean-reversion speed `a` (1/year).
    pub a: f64,
    /// Long-run level `b` (per annum).
    pub b: f64,
    /// Volatility-of-rate coefficient `c` (per sqrt-year).
    pub c: f64,
    /// Closed interval from which the initial value is drawn.
    pub x0_min: f64,
    pub x0_max: f64,
}

impl CirParams {
    /// Validates `a > 0`, `b > 0`, `c >= 0` and the initial range within `[0, 1)`.
    ///
    /// `c = 0` is admitted as the deterministic degenerate case.
    pub fn new(a: f64, b: f64, c: f64, x0_min: f64, x0_max: f64) -> Result<Self> {
        let p = CirParams { a, b, c, x0_min, x0_max };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.b.is_finite() && self.c.is_finite()) {
            return Err(Error::invalid_input("CIR parameters must be finite"));
        }
        if self.a <= 0.0 || self.b <= 0.0 || self.c < 0.0 {
            return Err(Error::invalid_input(format!(
                "CIR parameters require a > 0, b > 0, c >= 0; got a={}, b={}, c={}",
                self.a, self.b, self.c
            )));
        }
        if !(self.x0_min.is_finite() && self.x0_max.is_finite())
            || self.x0_min < 0.0
            || self.x0_max >= 1.0
            || self.x0_min > self.x0_max
        {
            return Err(Error::invalid_input(format!(
                "CIR initial range must satisfy 0 <= min <= max < 1; got [{}, {}]",
                self.x0_min, self.x0_max
            )));
        }
        Ok(())
    }

    pub fn x0_contains(&self, x0: f64) -> bool {
        x0 >= self.x0_min && x0 <= self.x0_max
    }
}

/// A nonnegative level path sampled on the uniform grid `0, dt, ..., n*dt`.
///
/// Between grid points the path is read as piecewise linear, which is the
/// convention shared by the drift averaging in the asset simulation and the
/// trapezoid discounting integral.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RatePath {
    dt: f64,
    values: Vec<f64>,
}

impl RatePath {
    pub fn new(dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid_input(format!("rate path dt must be > 0, got {dt}")));
        }
        if values.len() < 2 {
            return Err(Error::invalid_input(
                "rate path needs at least 2 grid points",
            ));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid_input(
                "rate path values must be finite and nonnegative",
            ));
        }
        Ok(RatePath { dt, values })
    }

    /// Path held constant at `level` over `n_steps` grid cells.
    pub fn constant(level: f64, dt: f64, n_steps: usize) -> Result<Self> {
        RatePath::new(dt, vec![level; n_steps.max(1) + 1])
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Last grid time, `(len - 1) * dt`.
    pub fn horizon(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.dt
    }

    pub fn covers(&self, t: f64) -> bool {
        // Tolerate the roundoff of `ceil(T/dt) * dt` reconstruction.
        t <= self.horizon() + 1e-12
    }

    /// Piecewise-linear interpolation, clamped to the grid range.
    pub fn value_at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.values[0];
        }
        let pos = t / self.dt;
        let cell = (pos.floor() as usize).min(self.values.len() - 2);
        let frac = (pos - cell as f64).clamp(0.0, 1.0);
        self.values[cell] * (1.0 - frac) + self.values[cell + 1] * frac
    }

    /// Arithmetic average of the stored grid samples.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Endpoint increment `x(end) - x(0)`.
    pub fn increment(&self) -> f64 {
        self.values[self.values.len() - 1] - self.values[0]
    }

    /// `∫_0^t x(s) ds` of the piecewise-linear path (exact on full cells,
    /// interpolated on the final partial cell).
    pub fn integral_to(&self, t: f64) -> Result<f64> {
        if !self.covers(t) || t < 0.0 {
            return Err(Error::invalid_input(format!(
                "path horizon {} does not cover requested time {}",
                self.horizon(),
                t
            )));
        }
        let t = t.min(self.horizon());
        let full_cells = (t / self.dt).floor() as usize;
        let full_cells = full_cells.min(self.values.len() - 1);
        let mut acc = 0.0;
        for k in 0..full_cells {
            acc += 0.5 * (self.values[k] + self.values[k + 1]) * self.dt;
        }
        let t0 = full_cells as f64 * self.dt;
        if t > t0 {
            acc += 0.5 * (self.value_at(t0) + self.value_at(t)) * (t - t0);
        }
        Ok(acc)
    }

    /// Average level over `[t0, t1]`; exact for a segment inside one cell.
    pub fn segment_average(&self, t0: f64, t1: f64) -> f64 {
        0.5 * (self.value_at(t0) + self.value_at(t1))
    }

    /// Truncate to the `ceil(t / dt)`-cell prefix covering `[0, t]`.
    pub fn truncated(&self, t: f64) -> Result<RatePath> {
        if !self.covers(t) || t <= 0.0 {
            return Err(Error::invalid_input(format!(
                "cannot truncate path with horizon {} to {}",
                self.horizon(),
                t
            )));
        }
        let n = ((t / self.dt).ceil() as usize).clamp(1, self.values.len() - 1);
        RatePath::new(self.dt, self.values[..=n].to_vec())
    }
}

/// Number of grid cells needed to cover `[0, t]` at step `dt`.
pub fn steps_for(t: f64, dt: f64) -> usize {
    ((t / dt).ceil() as usize).max(1)
}

/// Full-truncation Euler simulation of a CIR path covering `[0, T]`.
///
/// Returns `ceil(T/dt) + 1` nonnegative levels with `value[0] = x0`.
/// Deterministic given `(params, x0, T, dt, key)`.
pub fn simulate_cir(
    params: &CirParams,
    x0: f64,
    t_end: f64,
    dt: f64,
    key: StreamKey,
) -> Result<RatePath> {
    params.validate()?;
    if !x0.is_finite() || x0 < 0.0 {
        return Err(Error::invalid_input(format!(
            "CIR initial value must be finite and nonnegative, got {x0}"
        )));
    }
    if !params.x0_contains(x0) {
        return Err(Error::invalid_input(format!(
            "CIR initial value {x0} outside configured range [{}, {}]",
            params.x0_min, params.x0_max
        )));
    }
    if !(dt > 0.0) || t_end < dt {
        return Err(Error::invalid_input(format!(
            "CIR simulation requires dt > 0 and T >= dt; got dt={dt}, T={t_end}"
        )));
    }

    let n_steps = steps_for(t_end, dt);
    let sqrt_dt = dt.sqrt();
    let mut rng = key.rng();
    let mut values = Vec::with_capacity(n_steps + 1);

    // The auxiliary state may dip below zero; the emitted path is its
    // positive part, and drift/diffusion read the positive part as well.
    let mut state = x0;
    values.push(x0);
    for _ in 0..n_steps {
        let pos = state.max(0.0);
        let z: f64 = rng.sample(StandardNormal);
        state += params.a * (params.b - pos) * dt + params.c * pos.sqrt() * sqrt_dt * z;
        values.push(state.max(0.0));
    }
    RatePath::new(dt, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1_rate() -> CirParams {
        CirParams::new(0.6, 0.05, 0.05, 0.005, 0.1).unwrap()
    }

    #[test]
    fn paths_start_at_x0_and_stay_nonnegative() {
        let p = table1_rate();
        let path = simulate_cir(&p, 0.05, 1.0, 1.0 / 252.0, StreamKey::new(99)).unwrap();
        assert_eq!(path.values().len(), 253);
        assert_eq!(path.values()[0], 0.05);
        assert!(path.values().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn zero_noise_fixed_point_is_constant() {
        let p = CirParams::new(0.9, 0.05, 0.0, 0.0, 0.2).unwrap();
        let path = simulate_cir(&p, 0.05, 0.5, 1.0 / 252.0, StreamKey::new(1)).unwrap();
        for v in path.values() {
            assert!((v - 0.05).abs() < 1e-12);
        }
    }

    #[test]
    fn conditional_mean_matches_exact_formula() {
        // E[X(T) | X(0)=x0] = b + (x0 - b) e^{-aT}, estimated over 1e5 paths.
        let p = table1_rate();
        let (a, b, x0, t_end) = (p.a, p.b, 0.1, 1.0);
        let n = 100_000u64;
        let root = StreamKey::new(7041);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for i in 0..n {
            let path = simulate_cir(&p, x0, t_end, 1.0 / 252.0, root.child(i)).unwrap();
            let xt = *path.values().last().unwrap();
            sum += xt;
            sum_sq += xt * xt;
        }
        let mean = sum / n as f64;
        let var = (sum_sq / n as f64 - mean * mean).max(0.0);
        let stderr = (var / n as f64).sqrt();
        let exact = b + (x0 - b) * (-a * t_end).exp();
        assert!((exact - 0.0774).abs() < 5e-4);
        assert!(
            (mean - exact).abs() < 3.0 * stderr,
            "mean {mean} vs exact {exact} (stderr {stderr})"
        );
    }

    #[test]
    fn deterministic_given_key() {
        let p = table1_rate();
        let a = simulate_cir(&p, 0.03, 0.7, 1.0 / 252.0, StreamKey::new(5).child(2)).unwrap();
        let b = simulate_cir(&p, 0.03, 0.7, 1.0 / 252.0, StreamKey::new(5).child(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = table1_rate();
        assert!(simulate_cir(&p, -0.01, 1.0, 1.0 / 252.0, StreamKey::new(0)).is_err());
        assert!(simulate_cir(&p, f64::NAN, 1.0, 1.0 / 252.0, StreamKey::new(0)).is_err());
        assert!(simulate_cir(&p, 0.05, 0.5 / 252.0, 1.0 / 252.0, StreamKey::new(0)).is_err());
        assert!(CirParams::new(-0.1, 0.05, 0.05, 0.0, 0.1).is_err());
        assert!(CirParams::new(0.6, 0.05, 0.05, 0.2, 0.1).is_err());
    }

    #[test]
    fn integral_of_linear_ramp_is_exact() {
        // Path rising linearly 0 -> 0.1 over [0, 1]: integral = 0.05.
        let n = 252;
        let dt = 1.0 / n as f64;
        let values: Vec<f64> = (0..=n).map(|k| 0.1 * k as f64 / n as f64).collect();
        let path = RatePath::new(dt, values).unwrap();
        assert!((path.integral_to(1.0).unwrap() - 0.05).abs() < 1e-14);
        // Partial-cell upper limit interpolates.
        let half = path.integral_to(0.5).unwrap();
        assert!((half - 0.0125).abs() < 1e-12);
    }

    #[test]
    fn truncation_keeps_prefix() {
        let p = table1_rate();
        let path = simulate_cir(&p, 0.05, 1.0, 1.0 / 252.0, StreamKey::new(3)).unwrap();
        let short = path.truncated(0.25).unwrap();
        assert_eq!(short.values().len(), steps_for(0.25, 1.0 / 252.0) + 1);
        assert_eq!(&path.values()[..short.values().len()], short.values());
    }
}
