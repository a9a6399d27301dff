//! Ordinary-kriging interpolation of latent coordinates over physical space.
//!
//! Each latent coordinate gets its own predictor with a separable anisotropic
//! exponential correlation `exp(−Σ_l |Δ_l|/ρ_l)` over (easting, northing,
//! elevation). The process variance and constant mean are profiled out of the
//! Gaussian likelihood; the three ranges are found by multi-start simplex search.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::CovFunction;
use crate::data::StationSet;
use crate::error::{Error, Result};
use crate::mds::Embedding;
use crate::optim::{nelder_mead, SimplexOptions};

/// Nugget added to the correlation diagonal, relative to the process variance.
pub const NUGGET: f64 = 1e-8;
pub const RANGE_BOUNDS: (f64, f64) = (1e-2, 1e4);
const STARTS: [f64; 5] = [0.05, 0.2, 0.5, 1.0, 3.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrigingModel {
    pub points: Vec<[f64; 3]>,
    pub ranges: [f64; 3],
    pub variance: f64,
    pub nugget: f64,
    pub mean: f64,
    /// R⁻¹(y − mean·1)
    pub weights: Vec<f64>,
    pub log_likelihood: f64,
}

fn corr(a: &[f64; 3], b: &[f64; 3], ranges: &[f64; 3]) -> f64 {
    let s: f64 = (0..3).map(|l| (a[l] - b[l]).abs() / ranges[l]).sum();
    (-s).exp()
}

fn corr_matrix(points: &[[f64; 3]], ranges: &[f64; 3]) -> DMatrix<f64> {
    let n = points.len();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0 + NUGGET
        } else {
            corr(&points[i], &points[j], ranges)
        }
    })
}

struct Solved {
    mean: f64,
    resid_w: DVector<f64>,
    variance: f64,
    log_likelihood: f64,
}

fn solve(points: &[[f64; 3]], y: &DVector<f64>, ranges: &[f64; 3]) -> Option<Solved> {
    let n = points.len();
    let chol = Cholesky::new(corr_matrix(points, ranges))?;
    let ones = DVector::from_element(n, 1.0);
    let r1 = chol.solve(&ones);
    let ry = chol.solve(y);
    let mean = ones.dot(&ry) / ones.dot(&r1);
    let resid = y - &ones * mean;
    let resid_w = chol.solve(&resid);
    let variance = resid.dot(&resid_w) / n as f64;
    let half_logdet: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    let nf = n as f64;
    let log_likelihood =
        -0.5 * nf * (variance.ln() + 1.0 + (2.0 * std::f64::consts::PI).ln()) - half_logdet;
    Some(Solved {
        mean,
        resid_w,
        variance,
        log_likelihood,
    })
}

fn check_points(points: &[[f64; 3]]) -> Result<()> {
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            if points[i] == points[j] {
                return Err(Error::SingularCovariance(format!(
                    "stations {i} and {j} share coordinates"
                )));
            }
        }
    }
    Ok(())
}

fn is_constant(y: &[f64]) -> bool {
    let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    hi - lo <= 1e-12 * scale
}

fn clamp_log_range(v: f64) -> f64 {
    v.clamp(RANGE_BOUNDS.0.ln(), RANGE_BOUNDS.1.ln())
}

impl KrigingModel {
    /// Ordinary kriging with the ranges fixed.
    pub fn with_ranges(points: &[[f64; 3]], values: &[f64], ranges: [f64; 3]) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: values.len(),
            });
        }
        if points.is_empty() {
            return Err(Error::InsufficientStations("kriging needs at least one point".into()));
        }
        check_points(points)?;
        if is_constant(values) {
            return Ok(Self {
                points: points.to_vec(),
                ranges,
                variance: 0.0,
                nugget: 0.0,
                mean: values[0],
                weights: vec![0.0; values.len()],
                log_likelihood: f64::INFINITY,
            });
        }
        let y = DVector::from_column_slice(values);
        let s = solve(points, &y, &ranges)
            .ok_or_else(|| Error::SingularCovariance("kriging correlation matrix".into()))?;
        Ok(Self {
            points: points.to_vec(),
            ranges,
            variance: s.variance,
            nugget: NUGGET * s.variance,
            mean: s.mean,
            weights: s.resid_w.iter().copied().collect(),
            log_likelihood: s.log_likelihood,
        })
    }

    /// Ordinary kriging with ranges chosen by maximum likelihood.
    pub fn fit(points: &[[f64; 3]], values: &[f64]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InsufficientStations("kriging fit needs at least two points".into()));
        }
        check_points(points)?;
        let spread: Vec<f64> = (0..3)
            .map(|l| {
                let (lo, hi) = points
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p[l]), b.max(p[l])));
                if hi > lo {
                    hi - lo
                } else {
                    1.0
                }
            })
            .collect();
        if is_constant(values) {
            return Self::with_ranges(points, values, [spread[0], spread[1], spread[2]]);
        }
        let y = DVector::from_column_slice(values);
        let objective = |x: &[f64]| {
            let r = [
                clamp_log_range(x[0]).exp(),
                clamp_log_range(x[1]).exp(),
                clamp_log_range(x[2]).exp(),
            ];
            match solve(points, &y, &r) {
                Some(s) if s.log_likelihood.is_finite() => -s.log_likelihood,
                _ => f64::INFINITY,
            }
        };
        let opts = SimplexOptions {
            max_iter: 600,
            ftol: 1e-8,
            initial_step: 0.5,
        };
        let mut best: Option<(f64, Vec<f64>)> = None;
        for &f in &STARTS {
            let x0: Vec<f64> = spread.iter().map(|s| clamp_log_range((f * s).ln())).collect();
            let res = nelder_mead(objective, &x0, opts);
            if res.value.is_finite() && best.as_ref().is_none_or(|b| res.value < b.0) {
                best = Some((res.value, res.x));
            }
        }
        let (_, x) = best.ok_or_else(|| Error::NonConvergence("kriging range search".into()))?;
        let ranges = [
            clamp_log_range(x[0]).exp(),
            clamp_log_range(x[1]).exp(),
            clamp_log_range(x[2]).exp(),
        ];
        Self::with_ranges(points, values, ranges)
    }

    pub fn predict(&self, loc: &[f64; 3]) -> f64 {
        self.mean
            + self
                .points
                .iter()
                .zip(&self.weights)
                .map(|(p, w)| w * corr(loc, p, &self.ranges))
                .sum::<f64>()
    }
}

/// The fitted map ψ from physical space into the latent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpModel {
    pub predictors: Vec<KrigingModel>,
    pub stations: StationSet,
    pub embedding: Embedding,
}

/// One ordinary-kriging predictor per latent coordinate.
pub fn fit_warp(stations: &StationSet, emb: &Embedding) -> Result<WarpModel> {
    let n = stations.len();
    if emb.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: emb.n(),
        });
    }
    if n < emb.dim() + 2 {
        return Err(Error::InsufficientStations(format!(
            "warp into {} dimensions needs at least {} stations, got {n}",
            emb.dim(),
            emb.dim() + 2
        )));
    }
    let predictors = (0..emb.dim())
        .into_par_iter()
        .map(|c| {
            let col: Vec<f64> = emb.coords.column(c).iter().copied().collect();
            KrigingModel::fit(&stations.coords, &col)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WarpModel {
        predictors,
        stations: stations.clone(),
        embedding: emb.clone(),
    })
}

impl WarpModel {
    pub fn dim(&self) -> usize {
        self.predictors.len()
    }

    /// ψ(x) = (ψ_1(x), ..., ψ_d(x)).
    pub fn warp(&self, loc: &[f64; 3]) -> Vec<f64> {
        self.predictors.iter().map(|p| p.predict(loc)).collect()
    }
}

/// k(‖ψ(a) − ψ(b)‖).
pub fn model_cov(model: &WarpModel, f: &CovFunction, a: &[f64; 3], b: &[f64; 3]) -> f64 {
    if a == b {
        return 1.0;
    }
    let (wa, wb) = (model.warp(a), model.warp(b));
    let h = wa.iter().zip(&wb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    f.value(h)
}
