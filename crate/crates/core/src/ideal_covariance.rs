//! Ideal covariance matrices K* and the ideal distance matrix D* = k⁻¹(K*).
//!
//! Method 1 inverts the estimated extremal coefficients; method 2 maximizes
//! each pair's likelihood contribution separately. Off-diagonal entries are
//! kept in `[ε, 0.99]` either way, so D* has no zero entries.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brown_resnick::{cov_from_theta, PairDependence, PreparedData};
use crate::covariance::{matrix_inverse_map, CovFunction};
use crate::data::FrechetMatrix;
use crate::error::{Error, Result};
use crate::madogram::ExtremalMatrix;
use crate::mds::DissimilarityMatrix;
use crate::optim::golden_max;

/// Upper cap for off-diagonal ideal covariances.
pub const K_CAP: f64 = 0.99;

/// Default floor ε = exp(−3).
pub fn default_epsilon() -> f64 {
    (-3f64).exp()
}

const COARSE_GRID: usize = 50;
const REFINE_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IdealMethod {
    ExtremalInversion,
    PairLikelihood,
}

impl IdealMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            IdealMethod::ExtremalInversion => "K1",
            IdealMethod::PairLikelihood => "K2",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdealCovMatrix {
    pub k: DMatrix<f64>,
    pub method: IdealMethod,
    pub sigma: f64,
    pub epsilon: f64,
}

fn check_args(sigma: f64, epsilon: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::OutOfRange {
            value: sigma,
            range: "sigma > 0",
        });
    }
    if !(epsilon > 0.0 && epsilon < K_CAP) {
        return Err(Error::OutOfRange {
            value: epsilon,
            range: "epsilon in (0, 0.99)",
        });
    }
    Ok(())
}

fn upper_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect()
}

fn assemble(n: usize, pairs: &[(usize, usize)], vals: &[f64]) -> DMatrix<f64> {
    let mut k = DMatrix::identity(n, n);
    for (&(i, j), &v) in pairs.iter().zip(vals) {
        k[(i, j)] = v;
        k[(j, i)] = v;
    }
    k
}

/// K¹: extremal-coefficient inversion `1 − (2/σ²)Φ⁻¹(θ̂/2)²`, clamped to `[ε, 0.99]`.
pub fn ideal_cov_method1(theta_hat: &ExtremalMatrix, sigma: f64, epsilon: f64) -> Result<IdealCovMatrix> {
    check_args(sigma, epsilon)?;
    let n = theta_hat.n();
    let mut k = DMatrix::identity(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let t = theta_hat.theta[(i, j)].clamp(1.0, 2.0);
            let raw = cov_from_theta(sigma, t)?;
            let v = raw.clamp(epsilon, K_CAP);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(IdealCovMatrix {
        k,
        method: IdealMethod::ExtremalInversion,
        sigma,
        epsilon,
    })
}

/// ℓ_ij(k) evaluated at each point of `k_grid`.
pub fn pair_loglik_profile(col_i: &[f64], col_j: &[f64], sigma: f64, k_grid: &[f64]) -> Result<Vec<f64>> {
    if col_i.len() != col_j.len() {
        return Err(Error::DimensionMismatch {
            expected: col_i.len(),
            got: col_j.len(),
        });
    }
    let prepared = pair_prepared(col_i, col_j);
    k_grid
        .iter()
        .map(|&k| {
            if !(0.0..=K_CAP).contains(&k) {
                return Err(Error::OutOfRange {
                    value: k,
                    range: "[0, 0.99]",
                });
            }
            prepared.pair(0, 1, PairDependence::from_correlation(sigma, k).nu())
        })
        .collect()
}

fn pair_prepared(col_i: &[f64], col_j: &[f64]) -> PreparedData {
    let cols = vec![col_i.to_vec(), col_j.to_vec()];
    let ln_cols = cols.iter().map(|c| c.iter().map(|v| v.ln()).collect()).collect();
    PreparedData { cols, ln_cols }
}

/// Maximizer of ℓ_ij over `[lo, 0.99]`: coarse grid, then golden section on
/// the bracket around the best grid point.
fn pair_argmax(prepared: &PreparedData, i: usize, j: usize, sigma: f64, lo: f64) -> Result<f64> {
    let eval = |k: f64| prepared.pair(i, j, PairDependence::from_correlation(sigma, k).nu());
    let step = (K_CAP - lo) / (COARSE_GRID - 1) as f64;
    let grid: Vec<f64> = (0..COARSE_GRID)
        .map(|g| if g + 1 == COARSE_GRID { K_CAP } else { lo + g as f64 * step })
        .collect();
    let mut best = (0, f64::NEG_INFINITY);
    for (g, &k) in grid.iter().enumerate() {
        let v = eval(k)?;
        if v > best.1 {
            best = (g, v);
        }
    }
    let a = grid[best.0.saturating_sub(1)];
    let b = grid[(best.0 + 1).min(COARSE_GRID - 1)];
    let mut failure = None;
    let (k_star, v_star) = golden_max(
        |k| match eval(k) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NEG_INFINITY
            }
        },
        a,
        b,
        REFINE_TOL,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(if v_star >= best.1 { k_star } else { grid[best.0] })
}

/// K²: per-pair likelihood maximizers over `[max(ε, 0), 0.99]`.
pub fn ideal_cov_method2(data: &FrechetMatrix, sigma: f64, epsilon: f64) -> Result<IdealCovMatrix> {
    check_args(sigma, epsilon)?;
    let prepared = PreparedData::new(data);
    let n = data.n_stations();
    let pairs = upper_pairs(n);
    let lo = epsilon.max(0.0);
    let vals: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| pair_argmax(&prepared, i, j, sigma, lo).map(|k| k.clamp(epsilon, K_CAP)))
        .collect::<Result<_>>()?;
    Ok(IdealCovMatrix {
        k: assemble(n, &pairs, &vals),
        method: IdealMethod::PairLikelihood,
        sigma,
        epsilon,
    })
}

/// D* = k⁻¹(K*) under the covariance function `f`.
pub fn ideal_distances(k: &IdealCovMatrix, f: &CovFunction) -> Result<DissimilarityMatrix> {
    DissimilarityMatrix::new(matrix_inverse_map(f, &k.k)?)
}
