//! Isotropic correlation functions valid in any dimension, with their inverses.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::bisect;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum CovFunction {
    /// exp(−h^α), α ∈ (0, 2]
    PowerExponential { alpha: f64 },
    /// (1 + h) exp(−h)
    Matern32,
    /// (1 + h + h²/3) exp(−h)
    Matern52,
}

impl CovFunction {
    pub fn power_exponential(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha <= 2.0 {
            Ok(CovFunction::PowerExponential { alpha })
        } else {
            Err(Error::OutOfRange {
                value: alpha,
                range: "power-exponential alpha in (0, 2]",
            })
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self {
            CovFunction::PowerExponential { alpha } => Some(*alpha),
            _ => None,
        }
    }

    pub fn value(&self, h: f64) -> f64 {
        match *self {
            CovFunction::PowerExponential { alpha } => {
                if h == 0.0 {
                    1.0
                } else {
                    (-h.powf(alpha)).exp()
                }
            }
            CovFunction::Matern32 => (1.0 + h) * (-h).exp(),
            CovFunction::Matern52 => (1.0 + h + h * h / 3.0) * (-h).exp(),
        }
    }

    /// Distance `h ≥ 0` with `value(h) = c`, for `c ∈ (0, 1]`.
    pub fn inverse(&self, c: f64) -> Result<f64> {
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::OutOfRange {
                value: c,
                range: "correlation in (0, 1]",
            });
        }
        if c == 1.0 {
            return Ok(0.0);
        }
        match *self {
            CovFunction::PowerExponential { alpha } => Ok((-c.ln()).powf(1.0 / alpha)),
            _ => {
                // Monotone decreasing: grow the bracket, then bisect in log space
                // to keep the absolute error in value well under 1e-12.
                let mut hi = 1.0;
                while self.value(hi) > c {
                    hi *= 2.0;
                }
                let lc = c.ln();
                let g = |h: f64| self.ln_value(h) - lc;
                Ok(bisect(g, 0.0, hi, 1e-15 * hi.max(1.0)))
            }
        }
    }

    fn ln_value(&self, h: f64) -> f64 {
        match *self {
            CovFunction::PowerExponential { alpha } => -h.powf(alpha),
            CovFunction::Matern32 => (1.0 + h).ln() - h,
            CovFunction::Matern52 => (1.0 + h + h * h / 3.0).ln() - h,
        }
    }
}

/// Elementwise inverse of a correlation-like matrix into a distance matrix.
pub fn matrix_inverse_map(f: &CovFunction, k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: k.ncols(),
        });
    }
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let h = f.inverse(k[(i, j)])?;
            d[(i, j)] = h;
            d[(j, i)] = h;
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds() -> Vec<CovFunction> {
        let mut v: Vec<CovFunction> = [0.5, 1.0, 1.72, 2.0]
            .iter()
            .map(|&a| CovFunction::power_exponential(a).unwrap())
            .collect();
        v.push(CovFunction::Matern32);
        v.push(CovFunction::Matern52);
        v
    }

    #[test]
    fn values() {
        for f in kinds() {
            assert_eq!(f.value(0.0), 1.0);
        }
        let pe2 = CovFunction::power_exponential(2.0).unwrap();
        assert!((pe2.value(1.0) - (-1f64).exp()).abs() < 1e-16);
        assert!((CovFunction::Matern32.value(1.0) - 2.0 * (-1f64).exp()).abs() < 1e-16);
        assert!(CovFunction::power_exponential(0.0).is_err());
        assert!(CovFunction::power_exponential(2.1).is_err());
    }

    #[test]
    fn inverse_examples() {
        for f in kinds() {
            assert_eq!(f.inverse(1.0).unwrap(), 0.0);
            assert!(f.inverse(0.0).is_err());
            assert!(f.inverse(1.1).is_err());
        }
        let pe2 = CovFunction::power_exponential(2.0).unwrap();
        assert!((pe2.inverse((-4f64).exp()).unwrap() - 2.0).abs() < 1e-14);
        let c = CovFunction::Matern52.value(1.7);
        assert!((CovFunction::Matern52.inverse(c).unwrap() - 1.7).abs() < 1e-10);
    }

    #[test]
    fn roundtrip_and_monotonicity_on_grid() {
        for f in kinds() {
            let mut prev = f64::INFINITY;
            for i in 0..=5000 {
                let h = i as f64 * 0.01;
                let c = f.value(h);
                if c > f64::MIN_POSITIVE {
                    assert!(c < prev, "{f:?} not strictly decreasing at {h}");
                } else {
                    assert!(c <= prev, "{f:?} increasing at {h}");
                }
                prev = c;
                if c > f64::MIN_POSITIVE && c < 1.0 {
                    let back = f.inverse(c).unwrap();
                    assert!((f.value(back) - c).abs() < 1e-12, "{f:?} at {h}");
                    assert!((back - h).abs() < 1e-10 * h.max(1.0), "{f:?}: {h} vs {back}");
                }
            }
        }
    }

    #[test]
    fn matrix_map_examples() {
        let e1 = (-1f64).exp();
        let k = DMatrix::from_row_slice(3, 3, &[1.0, e1, e1, e1, 1.0, (-3f64).exp(), e1, (-3f64).exp(), 1.0]);
        let f = CovFunction::power_exponential(1.0).unwrap();
        let d = matrix_inverse_map(&f, &k).unwrap();
        assert!((d[(0, 1)] - 1.0).abs() < 1e-15);
        assert!((d[(1, 2)] - 3.0).abs() < 1e-15);
        assert_eq!(d[(0, 0)], 0.0);
        let back = d.map(|h| f.value(h));
        assert!((back - k).amax() < 1e-10);
    }
}
