//! Brown-Resnick (geometric Gaussian) max-stable model mathematics.
//!
//! A pair of unit-Fréchet sites whose underlying Gaussian field has correlation
//! `k` is governed by `ν = sqrt(σ²(1 − k)/2)`. With `w = ν + log(z_j/z_i)/(2ν)`
//! and `v = 2ν − w` the exponent function is
//!
//! ```text
//! V(z_i, z_j) = Φ(w)/z_i + Φ(v)/z_j
//! ```
//!
//! and, using φ(w)/z_i = φ(v)/z_j, its partial derivatives collapse to
//!
//! ```text
//! V_i  = −Φ(w)/z_i²          V_j = −Φ(v)/z_j²
//! V_ij = −φ(w)/(2ν z_i² z_j)
//! ```
//!
//! so the bivariate density is `exp(−V)·(Φ(w)Φ(v)/(z_i² z_j²) + φ(w)/(2ν z_i² z_j))`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FrechetMatrix;
use crate::error::{Error, Result};
use crate::normal;

/// Densities with ν at or below this are treated as complete dependence.
pub const NU_MIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrParams {
    pub sigma: f64,
}

impl BrParams {
    pub fn new(sigma: f64) -> Result<Self> {
        if sigma > 0.0 && sigma.is_finite() {
            Ok(Self { sigma })
        } else {
            Err(Error::OutOfRange {
                value: sigma,
                range: "sigma > 0",
            })
        }
    }
}

/// ν for a pair, from the Brown-Resnick σ and the Gaussian correlation `k ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PairDependence(pub f64);

impl PairDependence {
    pub fn from_correlation(sigma: f64, k: f64) -> Self {
        PairDependence((sigma * sigma * (1.0 - k).max(0.0) / 2.0).sqrt())
    }

    pub fn nu(self) -> f64 {
        self.0
    }
}

/// θ = 2Φ(sqrt(σ²(1 − k)/2)).
pub fn extremal_coefficient(sigma: f64, k: f64) -> f64 {
    2.0 * normal::cdf(PairDependence::from_correlation(sigma, k).nu())
}

/// Inverse of [`extremal_coefficient`] in `k`: `1 − (2/σ²)(Φ⁻¹(θ/2))²`,
/// with `−∞` at θ = 2.
pub fn cov_from_theta(sigma: f64, theta: f64) -> Result<f64> {
    if !(1.0..=2.0).contains(&theta) {
        return Err(Error::OutOfRange {
            value: theta,
            range: "[1, 2]",
        });
    }
    if theta == 2.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let q = normal::quantile(theta / 2.0);
    Ok(1.0 - 2.0 / (sigma * sigma) * q * q)
}

#[inline]
fn exponent_terms(zi: f64, zj: f64, nu: f64) -> (f64, f64) {
    let l = (zj / zi).ln() / (2.0 * nu);
    (nu + l, nu - l)
}

/// Joint CDF of a Brown-Resnick pair on unit-Fréchet margins.
pub fn bivariate_cdf(zi: f64, zj: f64, nu: PairDependence) -> f64 {
    let nu = nu.nu();
    if nu == 0.0 {
        return (-1.0 / zi.min(zj)).exp();
    }
    let (w, v) = exponent_terms(zi, zj, nu);
    (-(normal::cdf(w) / zi + normal::cdf(v) / zj)).exp()
}

#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// ln Φ(x) given Φ(x), falling back to the tail expansion where Φ(x) underflows.
#[inline]
fn ln_of_cdf(x: f64, c: f64) -> f64 {
    if x > -30.0 {
        c.ln()
    } else {
        normal::ln_cdf(x)
    }
}

/// Core density evaluation with `ln z` values precomputed; `zi <= zj` is not required.
#[inline]
fn log_density_raw(zi: f64, zj: f64, lzi: f64, lzj: f64, nu: f64, ln_2nu: f64) -> f64 {
    // Canonical order makes the result exactly symmetric.
    let (zi, zj, lzi, lzj) = if (zi, lzi) <= (zj, lzj) {
        (zi, zj, lzi, lzj)
    } else {
        (zj, zi, lzj, lzi)
    };
    let l = (lzj - lzi) / (2.0 * nu);
    let w = nu + l;
    let v = nu - l;
    let (cw, cv) = (normal::cdf(w), normal::cdf(v));
    let v_fn = cw / zi + cv / zj;
    // φ(w)/(2ν z_i² z_j) = φ(w) z_j/(2ν) / (z_i² z_j²)
    let c = -0.5 * w * w - normal::LN_SQRT_2PI - ln_2nu + lzj;
    if w > -30.0 && v > -30.0 {
        return -v_fn - 2.0 * (lzi + lzj) + (cw * cv + c.exp()).ln();
    }
    let a = ln_of_cdf(w, cw) + ln_of_cdf(v, cv);
    -v_fn - 2.0 * (lzi + lzj) + log_add_exp(a, c)
}

/// log ∂²F/∂z_i∂z_j for a Brown-Resnick pair.
pub fn bivariate_log_density(zi: f64, zj: f64, nu: PairDependence) -> Result<f64> {
    let nu = nu.nu();
    if !(nu > NU_MIN) {
        return Err(Error::DegenerateDependence { nu });
    }
    Ok(log_density_raw(
        zi,
        zj,
        zi.ln(),
        zj.ln(),
        nu,
        (2.0 * nu).ln(),
    ))
}

/// Per-pair log-likelihood contribution Σ_k log f(z_ik, z_jk; ν).
pub fn pair_log_likelihood(col_i: &[f64], col_j: &[f64], nu: PairDependence) -> Result<f64> {
    let nu = nu.nu();
    if !(nu > NU_MIN) {
        return Err(Error::DegenerateDependence { nu });
    }
    let ln_2nu = (2.0 * nu).ln();
    Ok(col_i
        .iter()
        .zip(col_j)
        .map(|(&a, &b)| log_density_raw(a, b, a.ln(), b.ln(), nu, ln_2nu))
        .sum())
}

/// Same as [`pair_log_likelihood`] with precomputed logarithms of both columns.
pub(crate) fn pair_log_likelihood_pre(
    col_i: &[f64],
    col_j: &[f64],
    ln_i: &[f64],
    ln_j: &[f64],
    nu: f64,
) -> Result<f64> {
    if !(nu > NU_MIN) {
        return Err(Error::DegenerateDependence { nu });
    }
    let ln_2nu = (2.0 * nu).ln();
    let mut s = 0.0;
    for k in 0..col_i.len() {
        s += log_density_raw(col_i[k], col_j[k], ln_i[k], ln_j[k], nu, ln_2nu);
    }
    Ok(s)
}

/// Columns of a Fréchet matrix and their logarithms, laid out for repeated
/// likelihood evaluations.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub cols: Vec<Vec<f64>>,
    pub ln_cols: Vec<Vec<f64>>,
}

impl PreparedData {
    pub fn new(data: &FrechetMatrix) -> Self {
        let cols: Vec<Vec<f64>> = (0..data.n_stations()).map(|i| data.column(i)).collect();
        let ln_cols = cols
            .iter()
            .map(|c| c.iter().map(|v| v.ln()).collect())
            .collect();
        Self { cols, ln_cols }
    }

    pub fn n_stations(&self) -> usize {
        self.cols.len()
    }

    pub fn pair(&self, i: usize, j: usize, nu: f64) -> Result<f64> {
        pair_log_likelihood_pre(&self.cols[i], &self.cols[j], &self.ln_cols[i], &self.ln_cols[j], nu)
    }

    /// Pairwise log-likelihood with the correlation for pair (i, j) given by `cov(i, j)`.
    pub fn pairwise_loglik_with<F>(&self, sigma: f64, cov: F) -> Result<f64>
    where
        F: Fn(usize, usize) -> f64 + Sync,
    {
        let n = self.n_stations();
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .collect();
        let terms: Vec<Result<f64>> = pairs
            .par_iter()
            .map(|&(i, j)| {
                let nu = PairDependence::from_correlation(sigma, cov(i, j)).nu();
                self.pair(i, j, nu)
            })
            .collect();
        // Fixed pair order keeps the sum bit-reproducible.
        let mut total = 0.0;
        for t in terms {
            total += t?;
        }
        Ok(total)
    }
}

/// Pairwise composite log-likelihood Σ_{i<j} Σ_k log f_ij(z_ik, z_jk).
pub fn pairwise_loglik(data: &FrechetMatrix, cov: &DMatrix<f64>, sigma: f64) -> Result<f64> {
    let n = data.n_stations();
    if cov.nrows() != n || cov.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: cov.nrows(),
        });
    }
    PreparedData::new(data).pairwise_loglik_with(sigma, |i, j| cov[(i, j)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn extremal_coefficient_examples() {
        assert_eq!(extremal_coefficient(3.0, 1.0), 1.0);
        // 2Φ(1) from an independent series for erf
        let two_phi_1 = 1.0 + erf_series(1.0 / std::f64::consts::SQRT_2);
        assert!((two_phi_1 - 1.682_689_492_137_085_9).abs() < 1e-14);
        assert!((extremal_coefficient(2.0, 0.5) - two_phi_1).abs() < 1e-14);
        let h: f64 = 0.0;
        assert_eq!(extremal_coefficient(2.37, (-h.powf(1.09)).exp()), 1.0);
    }

    fn erf_series(x: f64) -> f64 {
        // Maclaurin series of erf; converges fast for |x| < 1.
        let mut sum = 0.0;
        let mut term = x;
        for n in 0..60 {
            sum += term / (2 * n + 1) as f64;
            term *= -x * x / (n + 1) as f64;
        }
        2.0 / std::f64::consts::PI.sqrt() * sum
    }

    #[test]
    fn cov_from_theta_examples() {
        assert_eq!(cov_from_theta(2.0, 1.0).unwrap(), 1.0);
        assert_eq!(cov_from_theta(2.0, 2.0).unwrap(), f64::NEG_INFINITY);
        let theta = extremal_coefficient(2.0, 0.5);
        assert!((theta - 1.682_689).abs() < 5e-7);
        assert!((cov_from_theta(2.0, theta).unwrap() - 0.5).abs() < 1e-6);
        assert!(matches!(cov_from_theta(2.0, 2.1), Err(Error::OutOfRange { .. })));
        assert!(matches!(cov_from_theta(2.0, 0.9), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn cdf_examples() {
        let nu = PairDependence(0.8);
        let z = 1.7;
        let theta = 2.0 * normal::cdf(0.8);
        assert!((bivariate_cdf(z, z, nu) - (-theta / z).exp()).abs() < 1e-15);
        assert!((bivariate_cdf(1.0, 2.0, PairDependence(50.0)) - (-1.5f64).exp()).abs() < 1e-9);
        // exp(−2Φ(1)) with Φ from the erf series oracle
        let expected = (-(1.0 + erf_series(1.0 / std::f64::consts::SQRT_2))).exp();
        assert!((expected - 0.185_873_4).abs() < 1e-7);
        assert!((bivariate_cdf(1.0, 1.0, PairDependence(1.0)) - expected).abs() < 1e-6);
        assert!((bivariate_cdf(1.0, 3.0, PairDependence(0.0)) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn density_symmetric_and_rejects_degenerate() {
        let nu = PairDependence(0.37);
        for &(a, b) in &[(0.3, 5.0), (2.0, 2.5), (100.0, 0.01)] {
            assert_eq!(
                bivariate_log_density(a, b, nu).unwrap(),
                bivariate_log_density(b, a, nu).unwrap()
            );
        }
        assert!(matches!(
            bivariate_log_density(1.0, 1.0, PairDependence(1e-7)),
            Err(Error::DegenerateDependence { .. })
        ));
    }

    #[test]
    fn density_matches_mixed_difference() {
        let (zi, zj, nu) = (1.3, 0.7, PairDependence(0.8));
        let h = 1e-4;
        let f = |a: f64, b: f64| bivariate_cdf(a, b, nu);
        let fd = (f(zi + h, zj + h) - f(zi + h, zj - h) - f(zi - h, zj + h) + f(zi - h, zj - h))
            / (4.0 * h * h);
        let an = bivariate_log_density(zi, zj, nu).unwrap().exp();
        assert!(((fd - an) / an).abs() < 1e-5, "{fd} vs {an}");
    }

    #[test]
    fn pairwise_single_term_and_additivity() {
        let m = DMatrix::from_row_slice(1, 2, &[0.8, 2.3]);
        let data = FrechetMatrix::unnamed(m.clone()).unwrap();
        let mut cov = DMatrix::identity(2, 2);
        cov[(0, 1)] = 0.4;
        cov[(1, 0)] = 0.4;
        let ll = pairwise_loglik(&data, &cov, 2.0).unwrap();
        let direct =
            bivariate_log_density(0.8, 2.3, PairDependence::from_correlation(2.0, 0.4)).unwrap();
        assert_eq!(ll, direct);

        let doubled = FrechetMatrix::unnamed(DMatrix::from_row_slice(2, 2, &[0.8, 2.3, 0.8, 2.3]))
            .unwrap();
        assert_eq!(pairwise_loglik(&doubled, &cov, 2.0).unwrap(), 2.0 * ll);
    }

    proptest! {
        #[test]
        fn inversion_roundtrip(k in -1.0f64..1.0, s in prop::sample::select(vec![1.0, 2.0, 4.0])) {
            let th = extremal_coefficient(s, k);
            prop_assert!((cov_from_theta(s, th).unwrap() - k).abs() < 1e-12);
        }

        #[test]
        fn theta_decreasing_in_k(k1 in -3.0f64..0.99, dk in 0.001f64..0.5, s in 0.5f64..4.0) {
            let k2 = (k1 + dk).min(1.0);
            prop_assert!(extremal_coefficient(s, k1) > extremal_coefficient(s, k2));
        }

        #[test]
        fn cdf_within_frechet_hoeffding(a in 0.05f64..20.0, b in 0.05f64..20.0, nu in 0.01f64..5.0) {
            let f = bivariate_cdf(a, b, PairDependence(nu));
            let (fa, fb) = ((-1.0 / a).exp(), (-1.0 / b).exp());
            prop_assert!(f <= fa.min(fb) + 1e-15);
            prop_assert!(f >= (fa + fb - 1.0).max(0.0) - 1e-15);
        }
    }
}
