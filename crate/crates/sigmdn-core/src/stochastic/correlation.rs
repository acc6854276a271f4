//! Correlation structures built from sampled angles.
//!
//! A valid correlation matrix R = L L^T is parameterized by N(N-1)/2 angles
//! in (0, pi): row i of L is a point on the unit sphere written in the
//! trigonometric coordinates xi = sin(alpha), gamma = cos(alpha). Rows have
//! unit norm by construction, so diag(R) = 1 for any angle draw.

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor of a correlation matrix.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CholeskyFactor {
    n: usize,
    /// Row-major dense n x n storage; entries above the diagonal are zero.
    entries: Vec<f64>,
}

impl CholeskyFactor {
    /// Identity factor (uncorrelated assets).
    pub fn identity(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid_input("basket size must be >= 1"));
        }
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Ok(CholeskyFactor { n, entries })
    }

    /// Builds from explicit lower-triangular rows, validating the invariants:
    /// zero strictly above the diagonal, positive diagonal, unit row norms.
    pub fn from_lower_triangular(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 || entries.len() != n * n {
            return Err(Error::invalid_input(format!(
                "Cholesky factor needs n*n entries; got n={n}, len={}",
                entries.len()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let v = entries[i * n + j];
                if !v.is_finite() {
                    return Err(Error::invalid_input("Cholesky entries must be finite"));
                }
                if j > i && v != 0.0 {
                    return Err(Error::invalid_input(
                        "Cholesky factor must be lower-triangular",
                    ));
                }
            }
            if entries[i * n + i] <= 0.0 {
                return Err(Error::invalid_input(
                    "Cholesky diagonal entries must be > 0",
                ));
            }
            let norm: f64 = (0..=i).map(|j| entries[i * n + j].powi(2)).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-8 {
                return Err(Error::invalid_input(format!(
                    "Cholesky row {i} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(CholeskyFactor { n, entries })
    }

    /// Cholesky factor of an explicit correlation matrix (row-major, unit diagonal).
    pub fn from_correlation(n: usize, corr: &[f64]) -> Result<Self> {
        if n == 0 || corr.len() != n * n {
            return Err(Error::invalid_input("correlation matrix must be n x n"));
        }
        for i in 0..n {
            if (corr[i * n + i] - 1.0).abs() > 1e-10 {
                return Err(Error::invalid_input("correlation diagonal must be 1"));
            }
            for j in 0..n {
                let v = corr[i * n + j];
                if !v.is_finite() || (v - corr[j * n + i]).abs() > 1e-10 {
                    return Err(Error::invalid_input("correlation matrix must be symmetric"));
                }
            }
        }
        // Cholesky-Banachiewicz; fails on matrices that are not positive definite.
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = corr[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(Error::invalid_input(
                            "correlation matrix is not positive definite",
                        ));
                    }
                    l[i * n + j] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        CholeskyFactor::from_lower_triangular(n, l)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Dense row-major R = L L^T.
    pub fn correlation(&self) -> Vec<f64> {
        let n = self.n;
        let mut r = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..=i.min(j) {
                    s += self.entries[i * n + k] * self.entries[j * n + k];
                }
                r[i * n + j] = s;
            }
        }
        r
    }

    /// Lower triangle including the diagonal, row-major: N(N+1)/2 entries.
    pub fn lower_triangle_row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * (self.n + 1) / 2);
        for i in 0..self.n {
            for j in 0..=i {
                out.push(self.entries[i * self.n + j]);
            }
        }
        out
    }

    /// Correlates a vector of independent draws: out = L z.
    pub fn mul_vec(&self, z: &[f64], out: &mut [f64]) {
        debug_assert_eq!(z.len(), self.n);
        debug_assert_eq!(out.len(), self.n);
        for i in 0..self.n {
            let row = &self.entries[i * self.n..i * self.n + i + 1];
            let mut s = 0.0;
            for (k, l) in row.iter().enumerate() {
                s += l * z[k];
            }
            out[i] = s;
        }
    }
}

/// Basket size implied by an angle count of N(N-1)/2, if consistent.
fn basket_size_for_angles(count: usize) -> Option<usize> {
    let mut n = 1usize;
    loop {
        let needed = n * (n - 1) / 2;
        if needed == count {
            return Some(n);
        }
        if needed > count {
            return None;
        }
        n += 1;
    }
}

/// Builds the Cholesky factor of a correlation matrix from N(N-1)/2 angles.
///
/// Row i (zero-based) consumes angles `s..s+i` with `s = i(i-1)/2` and reads
///
/// ```text
/// L[i][j] = xi_s * ... * xi_{s+j-1} * gamma_{s+j}   for j < i
/// L[i][i] = xi_s * ... * xi_{s+i-1}
/// ```
///
/// with `xi = sin`, `gamma = cos`. Angles must lie strictly inside (0, pi);
/// at the boundary `sin = 0` would break the positive-diagonal invariant.
pub fn cholesky_from_angles(angles: &[f64]) -> Result<CholeskyFactor> {
    let n = basket_size_for_angles(angles.len()).ok_or_else(|| {
        Error::invalid_input(format!(
            "angle count {} is not of the form N(N-1)/2",
            angles.len()
        ))
    })?;
    for (idx, a) in angles.iter().enumerate() {
        if !a.is_finite() || *a <= 0.0 || *a >= std::f64::consts::PI {
            return Err(Error::invalid_input(format!(
                "angle {idx} = {a} must lie strictly inside (0, pi)"
            )));
        }
    }

    let mut entries = vec![0.0; n * n];
    entries[0] = 1.0;
    for i in 1..n {
        let start = i * (i - 1) / 2;
        let mut sin_prod = 1.0;
        for j in 0..i {
            entries[i * n + j] = sin_prod * angles[start + j].cos();
            sin_prod *= angles[start + j].sin();
        }
        entries[i * n + i] = sin_prod;
    }
    CholeskyFactor::from_lower_triangular(n, entries)
}
