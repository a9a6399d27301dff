//! Truncated spectral simulation of the Brown-Resnick process.
//!
//! Each replicate is `max_i η_i exp(σW_i − σ²/2)` over Poisson atoms
//! `η_i = 1/Γ_i` paired with independent Gaussian fields `W_i`.

use nalgebra::{Cholesky, DMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;

use crate::brown_resnick::extremal_coefficient;
use crate::covariance::CovFunction;
use crate::data::{FrechetMatrix, StationSet};
use crate::error::{Error, Result};

/// Standard deviations of W assumed to bound any future atom's field.
pub const W_MAX: f64 = 6.0;
pub const DEFAULT_TRUNCATION: usize = 200_000;
const JITTER: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SimSpec {
    /// n×m coordinates in the space where `cov` acts on Euclidean distance.
    pub points: DMatrix<f64>,
    pub station_ids: Vec<String>,
    pub sigma: f64,
    pub cov: CovFunction,
    pub p: usize,
    /// Hard cap on spectral atoms per replicate.
    pub truncation: usize,
    pub seed: u64,
}

impl SimSpec {
    pub fn new(points: DMatrix<f64>, sigma: f64, cov: CovFunction, p: usize, seed: u64) -> Self {
        let station_ids = (0..points.nrows()).map(|i| format!("s{i}")).collect();
        Self {
            points,
            station_ids,
            sigma,
            cov,
            p,
            truncation: DEFAULT_TRUNCATION,
            seed,
        }
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    fn distance(&self, i: usize, j: usize) -> f64 {
        (self.points.row(i) - self.points.row(j)).norm()
    }

    /// Gaussian correlation between points `i` and `j`.
    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        if i == j {
            1.0
        } else {
            self.cov.value(self.distance(i, j))
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::OutOfRange {
                value: self.sigma,
                range: "sigma > 0",
            });
        }
        if self.p == 0 || self.n() == 0 {
            return Err(Error::Config("simulation needs p >= 1 and at least one point".into()));
        }
        if self.truncation < 1000 {
            return Err(Error::Config("truncation must be at least 1000 atoms".into()));
        }
        if self.station_ids.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: self.station_ids.len(),
            });
        }
        Ok(())
    }
}

/// Points whose correlation is exactly 1 share one Gaussian coordinate.
fn group_identical(spec: &SimSpec) -> (Vec<usize>, Vec<usize>) {
    let n = spec.n();
    let mut reps: Vec<usize> = Vec::new();
    let mut map = vec![0; n];
    for i in 0..n {
        match reps.iter().position(|&r| spec.correlation(r, i) == 1.0) {
            Some(g) => map[i] = g,
            None => {
                map[i] = reps.len();
                reps.push(i);
            }
        }
    }
    (reps, map)
}

fn factor(spec: &SimSpec, reps: &[usize]) -> Result<DMatrix<f64>> {
    let m = reps.len();
    let mut c = DMatrix::from_fn(m, m, |a, b| spec.correlation(reps[a], reps[b]));
    for a in 0..m {
        c[(a, a)] += JITTER;
    }
    Cholesky::new(c)
        .map(|ch| ch.l())
        .ok_or_else(|| Error::SingularCovariance("simulation covariance is not positive definite".into()))
}

fn replicate(l: &DMatrix<f64>, sigma: f64, truncation: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let m = l.nrows();
    let shift = -0.5 * sigma * sigma;
    let ln_bound = sigma * W_MAX + shift;
    // running maxima kept on the log scale
    let mut ln_max = vec![f64::NEG_INFINITY; m];
    // stop once Γ exceeds this (η = 1/Γ can no longer reach the smallest maximum)
    let mut gamma_stop = f64::INFINITY;
    let mut gamma = 0.0;
    // ln Γ at the last atom where it was needed; Γ only grows, so this bounds later values from below
    let mut ln_gamma_low = f64::NEG_INFINITY;
    let mut eps = vec![0.0; m];
    let mut w = vec![0.0; m];
    for _ in 0..truncation {
        let e: f64 = Exp1.sample(rng);
        gamma += e;
        if gamma > gamma_stop {
            break;
        }
        for v in eps.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        // w = L ε with L lower triangular; track the largest gain over the current maxima
        let mut gain = f64::NEG_INFINITY;
        for (a, wa) in w.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (b, eb) in eps.iter().enumerate().take(a + 1) {
                acc += l[(a, b)] * eb;
            }
            *wa = acc;
            gain = gain.max(sigma * acc + shift - ln_max[a]);
        }
        // an update needs σw + shift − ln Γ > ln_max somewhere
        if gain <= ln_gamma_low {
            continue;
        }
        let ln_eta = -gamma.ln();
        ln_gamma_low = -ln_eta;
        let mut changed = false;
        for (mx, wv) in ln_max.iter_mut().zip(w.iter()) {
            let y = ln_eta + sigma * wv + shift;
            if y > *mx {
                *mx = y;
                changed = true;
            }
        }
        if changed {
            let floor = ln_max.iter().copied().fold(f64::INFINITY, f64::min);
            gamma_stop = (ln_bound - floor).exp();
        }
    }
    ln_max.into_iter().map(f64::exp).collect()
}

/// `spec.p` independent replicates at `spec.points`, on the unit-Fréchet scale.
pub fn simulate_field(spec: &SimSpec) -> Result<FrechetMatrix> {
    spec.validate()?;
    let (reps, map) = group_identical(spec);
    let l = factor(spec, &reps)?;
    let rows: Vec<Vec<f64>> = (0..spec.p)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(r as u64);
            replicate(&l, spec.sigma, spec.truncation, &mut rng)
        })
        .collect();
    let values = DMatrix::from_fn(spec.p, spec.n(), |k, i| rows[k][map[i]]);
    let years = (0..spec.p).map(|k| k.to_string()).collect();
    FrechetMatrix::new(values, spec.station_ids.clone(), years)
}

/// Analytic θ for every pair of `spec.points`.
pub fn true_theta_matrix(spec: &SimSpec) -> DMatrix<f64> {
    let n = spec.n();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            extremal_coefficient(spec.sigma, spec.correlation(i, j))
        }
    })
}

/// Stations on a planar grid whose dependence is stationary only after a
/// smooth warp into 4-D: `(e/s, n/s, A sin(2πe/P), A cos(2πe/P))`.
///
/// Points one period apart in easting are closer in the latent space than
/// points half a period apart, which no monotone function of planar distance
/// can reproduce.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpedGrid {
    pub nx: usize,
    pub ny: usize,
    /// Grid spacing in km.
    pub spacing: f64,
    /// km per latent unit along the planar axes.
    pub scale: f64,
    pub amplitude: f64,
    /// Helix period in km of easting.
    pub period: f64,
    pub sigma: f64,
    pub cov: CovFunction,
    pub p: usize,
    pub seed: u64,
}

impl Default for WarpedGrid {
    fn default() -> Self {
        Self {
            nx: 10,
            ny: 6,
            spacing: 10.0,
            scale: 100.0,
            amplitude: 0.5,
            period: 60.0,
            sigma: 2.0,
            cov: CovFunction::PowerExponential { alpha: 1.5 },
            p: 200,
            seed: 2024,
        }
    }
}

impl WarpedGrid {
    /// Station layout; elevation carries a smooth bump unrelated to the warp.
    pub fn stations(&self) -> StationSet {
        let n = self.nx * self.ny;
        let coords = (0..n)
            .map(|i| {
                let e = (i % self.nx) as f64 * self.spacing;
                let no = (i / self.nx) as f64 * self.spacing;
                let (ce, cn) = (
                    0.5 * (self.nx - 1) as f64 * self.spacing,
                    0.5 * (self.ny - 1) as f64 * self.spacing,
                );
                let bump = 600.0 * (-((e - ce).powi(2) + (no - cn).powi(2)) / (2.0 * (2.0 * self.spacing).powi(2))).exp();
                [e, no, 400.0 + bump]
            })
            .collect();
        StationSet::new((0..n).map(|i| format!("S{i:02}")).collect(), coords)
            .expect("generated layout is valid")
    }

    /// The true latent position of a physical location.
    pub fn warp(&self, x: &[f64; 3]) -> [f64; 4] {
        let ang = 2.0 * std::f64::consts::PI * x[0] / self.period;
        [
            x[0] / self.scale,
            x[1] / self.scale,
            self.amplitude * ang.sin(),
            self.amplitude * ang.cos(),
        ]
    }

    pub fn spec(&self) -> SimSpec {
        let st = self.stations();
        let pts: Vec<[f64; 4]> = st.coords.iter().map(|x| self.warp(x)).collect();
        let points = DMatrix::from_fn(pts.len(), 4, |i, c| pts[i][c]);
        SimSpec {
            points,
            station_ids: st.ids.clone(),
            sigma: self.sigma,
            cov: self.cov,
            p: self.p,
            truncation: DEFAULT_TRUNCATION,
            seed: self.seed,
        }
    }
}
