//! Pairwise extremal coefficients from the F-madogram, and the θ misfit score.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::data::FrechetMatrix;
use crate::error::{Error, Result};

/// n×n pairwise extremal-coefficient estimates, symmetric with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalMatrix {
    pub theta: DMatrix<f64>,
    pub station_ids: Vec<String>,
}

impl ExtremalMatrix {
    pub fn n(&self) -> usize {
        self.theta.nrows()
    }

    pub fn select(&self, idx: &[usize]) -> ExtremalMatrix {
        ExtremalMatrix {
            theta: DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.theta[(idx[a], idx[b])]),
            station_ids: idx.iter().map(|&i| self.station_ids[i].clone()).collect(),
        }
    }
}

/// Plotting-position empirical CDF `rank/(p+1)`, ties sharing their average rank.
pub fn empirical_cdf(col: &[f64]) -> Vec<f64> {
    let p = col.len();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
    let mut out = vec![0.0; p];
    let mut start = 0;
    while start < p {
        let mut end = start + 1;
        while end < p && col[order[end]] == col[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end share their mean
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            out[idx] = rank / (p as f64 + 1.0);
        }
        start = end;
    }
    out
}

fn theta_from_ranks(fi: &[f64], fj: &[f64]) -> f64 {
    let p = fi.len() as f64;
    let nu = fi.iter().zip(fj).map(|(a, b)| (a - b).abs()).sum::<f64>() / (2.0 * p);
    let theta = (1.0 + 2.0 * nu) / (1.0 - 2.0 * nu);
    if theta.is_nan() {
        2.0
    } else {
        theta.clamp(1.0, 2.0)
    }
}

/// F-madogram estimate of the pairwise extremal coefficient, clamped into [1, 2].
pub fn f_madogram_theta(col_i: &[f64], col_j: &[f64]) -> Result<f64> {
    if col_i.len() != col_j.len() {
        return Err(Error::DimensionMismatch {
            expected: col_i.len(),
            got: col_j.len(),
        });
    }
    if col_i.len() < 2 {
        return Err(Error::DegenerateSample("F-madogram needs p >= 2".into()));
    }
    Ok(theta_from_ranks(&empirical_cdf(col_i), &empirical_cdf(col_j)))
}

pub fn extremal_matrix(data: &FrechetMatrix) -> Result<ExtremalMatrix> {
    let n = data.n_stations();
    if data.n_years() < 2 {
        return Err(Error::DegenerateSample("F-madogram needs p >= 2".into()));
    }
    let ranks: Vec<Vec<f64>> = (0..n).map(|i| empirical_cdf(&data.column(i))).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| theta_from_ranks(&ranks[i], &ranks[j]))
                .collect()
        })
        .collect();
    let mut theta = DMatrix::from_element(n, n, 1.0);
    for (i, row) in rows.iter().enumerate() {
        for (off, &t) in row.iter().enumerate() {
            let j = i + 1 + off;
            theta[(i, j)] = t;
            theta[(j, i)] = t;
        }
    }
    Ok(ExtremalMatrix {
        theta,
        station_ids: data.station_ids.clone(),
    })
}

/// (1/n²) Σ_{i,j} (θ_ij − θ̂_ij)², diagonal included.
pub fn theta_mse(model_theta: &DMatrix<f64>, theta_hat: &DMatrix<f64>) -> Result<f64> {
    if model_theta.shape() != theta_hat.shape() {
        return Err(Error::DimensionMismatch {
            expected: theta_hat.nrows(),
            got: model_theta.nrows(),
        });
    }
    let n = theta_hat.nrows() as f64;
    Ok((model_theta - theta_hat).iter().map(|d| d * d).sum::<f64>() / (n * n))
}
