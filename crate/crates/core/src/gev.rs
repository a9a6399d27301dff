//! GEV margins: per-station fits and the transform to unit-Fréchet scale.
//!
//! Each station's block maxima are modelled as
//!
//! ```text
//! F(u) = exp(-(1 + ξ (u - μ) / σ)_+^(-1/ξ))
//! ```
//!
//! with ξ constrained to `[0, 0.15]` by default. Parameters are estimated either
//! from the station alone or by pooling the station with its `J` nearest
//! neighbours under a shared shape and free per-station location/scale; the `J`
//! with the best quantile-quantile agreement is kept. Data are then mapped to
//! unit-Fréchet margins through `u ↦ -1 / log F(u)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::data::{FrechetMatrix, MaximaMatrix, StationSet};
use crate::error::{Error, Result};
use crate::optim::{golden_max, nelder_mead, SimplexOptions};

/// Below this |ξ| the Gumbel limit is used.
const GUMBEL_XI: f64 = 1e-9;
/// CDF values are clamped into `[CDF_CLAMP, 1 - CDF_CLAMP]` before the Fréchet transform.
const CDF_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevParams {
    pub mu: f64,
    pub sigma: f64,
    pub xi: f64,
}

impl GevParams {
    pub fn new(mu: f64, sigma: f64, xi: f64) -> Result<Self> {
        if !(sigma > 0.0) || !mu.is_finite() || !xi.is_finite() {
            return Err(Error::OutOfRange {
                value: sigma,
                range: "GEV scale must be > 0 with finite location and shape",
            });
        }
        Ok(Self { mu, sigma, xi })
    }

    pub fn cdf(&self, u: f64) -> f64 {
        let y = (u - self.mu) / self.sigma;
        if self.xi.abs() < GUMBEL_XI {
            return (-(-y).exp()).exp();
        }
        let t = 1.0 + self.xi * y;
        if t <= 0.0 {
            return if self.xi > 0.0 { 0.0 } else { 1.0 };
        }
        (-t.powf(-1.0 / self.xi)).exp()
    }

    /// Inverse of [`GevParams::cdf`] on (0, 1).
    pub fn quantile(&self, p: f64) -> f64 {
        let e = -p.ln();
        if self.xi.abs() < GUMBEL_XI {
            self.mu - self.sigma * e.ln()
        } else {
            self.mu + self.sigma * (e.powf(-self.xi) - 1.0) / self.xi
        }
    }

    pub fn log_pdf(&self, u: f64) -> f64 {
        let y = (u - self.mu) / self.sigma;
        if self.xi.abs() < GUMBEL_XI {
            return -self.sigma.ln() - y - (-y).exp();
        }
        let t = 1.0 + self.xi * y;
        if t <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let lt = t.ln();
        -self.sigma.ln() - (1.0 + 1.0 / self.xi) * lt - (-lt / self.xi).exp()
    }

    pub fn log_likelihood(&self, series: &[f64]) -> f64 {
        series.iter().map(|&u| self.log_pdf(u)).sum()
    }
}

/// Free-function form of [`GevParams::cdf`].
pub fn gev_cdf(u: f64, params: &GevParams) -> f64 {
    params.cdf(u)
}

/// Free-function form of [`GevParams::quantile`].
pub fn gev_quantile(p: f64, params: &GevParams) -> f64 {
    params.quantile(p)
}

#[derive(Debug, Clone, Copy)]
pub struct GevFitOptions {
    pub xi_bounds: (f64, f64),
    pub restarts: usize,
    pub tolerance: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for GevFitOptions {
    fn default() -> Self {
        Self {
            xi_bounds: (0.0, 0.15),
            restarts: 5,
            tolerance: 1e-8,
            max_iter: 4000,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GevFit {
    pub params: GevParams,
    pub log_likelihood: f64,
    /// Log-likelihood at the probability-weighted-moment initializer.
    pub initial_log_likelihood: f64,
}

/// Probability-weighted-moment estimate (Hosking et al.), shape clamped into `bounds`.
pub fn pwm_initializer(series: &[f64], bounds: (f64, f64)) -> GevParams {
    let mut x = series.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    for (j, &v) in x.iter().enumerate() {
        let j = j as f64;
        b0 += v;
        b1 += v * j / (n - 1.0);
        b2 += v * j * (j - 1.0) / ((n - 1.0) * (n - 2.0));
    }
    b0 /= n;
    b1 /= n;
    b2 /= n;
    let c = (2.0 * b1 - b0) / (3.0 * b2 - b0) - 2f64.ln() / 3f64.ln();
    let k = 7.8590 * c + 2.9554 * c * c;
    let xi = (-k).clamp(bounds.0, bounds.1);
    let (mu, sigma) = if xi.abs() < GUMBEL_XI || !k.is_finite() {
        let sigma = (2.0 * b1 - b0) / 2f64.ln();
        (b0 - 0.577_215_664_901_532_9 * sigma, sigma)
    } else {
        let kk = -xi;
        let g = gamma(1.0 + kk);
        let sigma = (2.0 * b1 - b0) * kk / (g * (1.0 - 2f64.powf(-kk)));
        (b0 - sigma * (1.0 - g) / kk, sigma)
    };
    GevParams {
        mu,
        sigma: if sigma > 0.0 && sigma.is_finite() { sigma } else { 1.0 },
        xi,
    }
}

fn check_series(series: &[f64]) -> Result<()> {
    if series.len() < 3 {
        return Err(Error::DegenerateSample(format!(
            "{} values are too few for a GEV fit",
            series.len()
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateSample("non-finite value in series".into()));
    }
    let first = series[0];
    if series.iter().all(|&v| v == first) {
        return Err(Error::DegenerateSample("all values are equal".into()));
    }
    Ok(())
}

/// Moves a starting point inside the support so its likelihood is finite.
fn feasible_start(series: &[f64], mut p: GevParams) -> GevParams {
    for _ in 0..60 {
        if p.log_likelihood(series).is_finite() {
            break;
        }
        p.sigma *= 1.5;
    }
    p
}

/// Negative log-likelihood over (μ, log σ, ξ) with ξ projected onto the bounds.
fn penalized_nll(series: &[f64], theta: &[f64], bounds: (f64, f64)) -> f64 {
    let xi_c = theta[2].clamp(bounds.0, bounds.1);
    let p = GevParams {
        mu: theta[0],
        sigma: theta[1].exp(),
        xi: xi_c,
    };
    let ll = p.log_likelihood(series);
    if !ll.is_finite() {
        return f64::INFINITY;
    }
    -ll + 1e6 * (theta[2] - xi_c).powi(2)
}

fn to_params(theta: &[f64], bounds: (f64, f64)) -> GevParams {
    GevParams {
        mu: theta[0],
        sigma: theta[1].exp(),
        xi: theta[2].clamp(bounds.0, bounds.1),
    }
}

/// Box-constrained maximum-likelihood GEV fit.
pub fn fit_gev_ml(series: &[f64], opts: &GevFitOptions) -> Result<GevFit> {
    check_series(series)?;
    let bounds = opts.xi_bounds;
    let init = feasible_start(series, pwm_initializer(series, bounds));
    let init_ll = init.log_likelihood(series);
    let simplex = SimplexOptions {
        max_iter: opts.max_iter,
        ftol: opts.tolerance,
        initial_step: 0.1,
    };
    let objective = |t: &[f64]| penalized_nll(series, t, bounds);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let base = [init.mu, init.sigma.ln(), init.xi];
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut any_converged = false;
    for r in 0..opts.restarts.max(1) {
        let start = if r == 0 {
            base.to_vec()
        } else {
            let s = feasible_start(
                series,
                GevParams {
                    mu: base[0] + 0.2 * init.sigma * (rng.random::<f64>() - 0.5),
                    sigma: (base[1] + 0.2 * (rng.random::<f64>() - 0.5)).exp(),
                    xi: bounds.0 + (bounds.1 - bounds.0) * rng.random::<f64>(),
                },
            );
            vec![s.mu, s.sigma.ln(), s.xi]
        };
        let res = nelder_mead(objective, &start, simplex);
        // polish from the end point until the simplex stops moving
        let res2 = nelder_mead(objective, &res.x, simplex);
        any_converged |= res.converged || res2.converged;
        let (x, v) = if res2.value <= res.value {
            (res2.x, res2.value)
        } else {
            (res.x, res.value)
        };
        if best.as_ref().is_none_or(|b| v < b.1) {
            best = Some((x, v));
        }
    }
    let (x, _) = best.expect("at least one restart");
    if !any_converged {
        return Err(Error::NonConvergence(
            "GEV simplex search exhausted its iteration budget".into(),
        ));
    }
    let mut params = to_params(&x, bounds);
    let mut ll = params.log_likelihood(series);
    if !(ll >= init_ll) {
        params = init;
        ll = init_ll;
    }
    Ok(GevFit {
        params,
        log_likelihood: ll,
        initial_log_likelihood: init_ll,
    })
}

/// Best (μ, σ) for one series at a fixed shape.
fn fit_location_scale(series: &[f64], xi: f64, opts: &GevFitOptions) -> (GevParams, f64) {
    let init = feasible_start(series, {
        let p = pwm_initializer(series, (xi, xi));
        GevParams { xi, ..p }
    });
    let f = |t: &[f64]| {
        let p = GevParams {
            mu: t[0],
            sigma: t[1].exp(),
            xi,
        };
        let ll = p.log_likelihood(series);
        if ll.is_finite() {
            -ll
        } else {
            f64::INFINITY
        }
    };
    let simplex = SimplexOptions {
        max_iter: opts.max_iter,
        ftol: opts.tolerance,
        initial_step: 0.1,
    };
    let r = nelder_mead(f, &[init.mu, init.sigma.ln()], simplex);
    let r = nelder_mead(f, &r.x, simplex);
    (
        GevParams {
            mu: r.x[0],
            sigma: r.x[1].exp(),
            xi,
        },
        -r.value,
    )
}

/// Pooled fit for `target`: shared ξ across the target and its `neighbors`, free
/// (μ, σ) per station, independence likelihood. With no neighbours this is
/// exactly [`fit_gev_ml`].
pub fn fit_gev_pooled(
    target: usize,
    neighbors: &[usize],
    data: &MaximaMatrix,
    opts: &GevFitOptions,
) -> Result<GevFit> {
    let series = data.column(target);
    if neighbors.is_empty() {
        return fit_gev_ml(&series, opts);
    }
    if neighbors.contains(&target) {
        return Err(Error::Config("neighbour list contains the target station".into()));
    }
    check_series(&series)?;
    let columns: Vec<Vec<f64>> = std::iter::once(target)
        .chain(neighbors.iter().copied())
        .map(|i| data.column(i))
        .collect();
    for c in &columns {
        check_series(c)?;
    }
    let bounds = opts.xi_bounds;
    let profile = |xi: f64| -> f64 {
        columns
            .iter()
            .map(|c| fit_location_scale(c, xi, opts).1)
            .sum()
    };
    let (xi, _) = golden_max(profile, bounds.0, bounds.1, 1e-5);
    let (params, _) = fit_location_scale(&series, xi, opts);
    let init = feasible_start(&series, pwm_initializer(&series, bounds));
    Ok(GevFit {
        params,
        log_likelihood: params.log_likelihood(&series),
        initial_log_likelihood: init.log_likelihood(&series),
    })
}

/// Mean absolute deviation between sorted observations and fitted quantiles at
/// plotting positions i/(p+1).
pub fn qq_discrepancy(series: &[f64], params: &GevParams) -> f64 {
    let mut x = series.to_vec();
    x.sort_by(f64::total_cmp);
    let p = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| (v - params.quantile((i as f64 + 1.0) / (p + 1.0))).abs())
        .sum::<f64>()
        / p
}

/// Per-station margin estimate together with the neighbour count that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginFit {
    pub station_id: String,
    pub params: GevParams,
    pub neighbors: usize,
}

#[derive(Debug, Clone)]
pub struct MarginOptions {
    pub fit: GevFitOptions,
    /// Candidate neighbour counts; the one with the smallest qq discrepancy wins.
    pub j_candidates: Vec<usize>,
}

impl Default for MarginOptions {
    fn default() -> Self {
        Self {
            fit: GevFitOptions::default(),
            j_candidates: vec![0, 3, 5, 10],
        }
    }
}

/// Fits every station in `data`. Neighbours are drawn from `pool` (all stations
/// when `None`), so a hold-out run can keep test stations out of training margins.
pub fn fit_margins(
    data: &MaximaMatrix,
    stations: &StationSet,
    pool: Option<&[usize]>,
    opts: &MarginOptions,
) -> Result<Vec<MarginFit>> {
    if stations.len() != data.n_stations() {
        return Err(Error::DimensionMismatch {
            expected: data.n_stations(),
            got: stations.len(),
        });
    }
    (0..data.n_stations())
        .into_par_iter()
        .map(|i| {
            let series = data.column(i);
            let mut best: Option<(f64, GevFit, usize)> = None;
            for &j in &opts.j_candidates {
                let neigh = stations.nearest_neighbors(i, j, pool);
                if neigh.len() < j {
                    continue;
                }
                let fit = fit_gev_pooled(i, &neigh, data, &opts.fit)?;
                let score = qq_discrepancy(&series, &fit.params);
                if best.as_ref().is_none_or(|b| score < b.0) {
                    best = Some((score, fit, j));
                }
            }
            let (_, fit, j) = match best {
                Some(b) => b,
                None => (0.0, fit_gev_ml(&series, &opts.fit)?, 0),
            };
            Ok(MarginFit {
                station_id: data.station_ids[i].clone(),
                params: fit.params,
                neighbors: j,
            })
        })
        .collect()
}

/// `u ↦ -1 / log F(u)` with F clamped away from 0 and 1.
pub fn frechet_value(u: f64, params: &GevParams) -> f64 {
    let f = params.cdf(u).clamp(CDF_CLAMP, 1.0 - CDF_CLAMP);
    -1.0 / f.ln()
}

pub fn to_frechet(data: &MaximaMatrix, params: &[GevParams]) -> Result<FrechetMatrix> {
    if params.len() != data.n_stations() {
        return Err(Error::DimensionMismatch {
            expected: data.n_stations(),
            got: params.len(),
        });
    }
    let mut values = data.values.clone();
    for (i, p) in params.iter().enumerate() {
        for v in values.column_mut(i).iter_mut() {
            *v = frechet_value(*v, p);
        }
    }
    FrechetMatrix::new(values, data.station_ids.clone(), data.years.clone())
}

/// Draws `n` GEV variates by inversion.
pub fn sample_gev<R: Rng>(params: &GevParams, n: usize, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            params.quantile(u)
        })
        .collect()
}
