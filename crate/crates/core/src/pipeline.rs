//! Parameter selection for the latent-space models, the climate-space
//! baseline, and hold-out experiments.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brown_resnick::{extremal_coefficient, PreparedData};
use crate::covariance::CovFunction;
use crate::data::{FrechetMatrix, StationSet};
use crate::error::{Error, Result};
use crate::ideal_covariance::{
    default_epsilon, ideal_cov_method1, ideal_cov_method2, ideal_distances, IdealCovMatrix,
};
use crate::io;
use crate::latent_warp::{fit_warp, model_cov, WarpModel};
use crate::madogram::{extremal_matrix, theta_mse, ExtremalMatrix};
use crate::mds::{sammon_mds, Embedding, SammonOptions};
use crate::optim::golden_max;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Extremal-coefficient inversion, scored by θ^MSE.
    Method1,
    /// Per-pair likelihood maximization, scored by pairwise log-likelihood.
    Method2,
    Classical,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Method1 => "method1",
            Method::Method2 => "method2",
            Method::Classical => "classical",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "method1" => Ok(Method::Method1),
            "2" | "method2" => Ok(Method::Method2),
            "classical" => Ok(Method::Classical),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

fn require_mds(method: Method) -> Result<()> {
    if method == Method::Classical {
        Err(Error::Config("the classical model has no MDS sweep".into()))
    } else {
        Ok(())
    }
}

/// `n` equispaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub sigma_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub d_set: Vec<usize>,
    /// Minimal relative θ^MSE improvement for accepting one more dimension.
    pub r1: f64,
    /// Minimal relative log-likelihood improvement for accepting one more dimension.
    pub r2: f64,
    pub epsilon: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            sigma_grid: (10..=40).map(|i| i as f64 / 10.0).collect(),
            alpha_grid: linspace(0.02, 2.0, 100),
            d_set: vec![2, 3, 4, 5, 6],
            r1: 0.05,
            r2: 0.00025,
            epsilon: default_epsilon(),
        }
    }
}

impl GridSpec {
    /// A desk-scale grid: σ ∈ {1.5, 2, 2.5, 3}, 20 α values, d ∈ {2, 3, 4}.
    pub fn reduced() -> Self {
        Self {
            sigma_grid: vec![1.5, 2.0, 2.5, 3.0],
            alpha_grid: linspace(0.1, 2.0, 20),
            d_set: vec![2, 3, 4],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma_grid.is_empty() {
            return Err(Error::EmptyGrid("sigma"));
        }
        if self.alpha_grid.is_empty() {
            return Err(Error::EmptyGrid("alpha"));
        }
        if self.d_set.is_empty() {
            return Err(Error::EmptyGrid("d"));
        }
        let sorted = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if !sorted(&self.sigma_grid) || !sorted(&self.alpha_grid) || !self.d_set.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config("grids must be strictly increasing".into()));
        }
        if self.sigma_grid.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::OutOfRange {
                value: self.sigma_grid[0],
                range: "sigma > 0",
            });
        }
        if self.alpha_grid.iter().any(|a| !(*a > 0.0 && *a <= 2.0)) {
            return Err(Error::OutOfRange {
                value: self.alpha_grid[0],
                range: "alpha in (0, 2]",
            });
        }
        Ok(())
    }
}

/// Rotation-and-anisotropy map U of physical coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClimateTransform {
    pub beta: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl ClimateTransform {
    pub fn matrix(&self) -> Matrix3<f64> {
        let (s, c) = self.beta.sin_cos();
        Matrix3::new(
            self.c1 * c,
            -self.c1 * s,
            0.0,
            self.c2 * s,
            self.c2 * c,
            0.0,
            0.0,
            0.0,
            self.c3,
        )
    }

    pub fn apply(&self, x: &[f64; 3]) -> Vector3<f64> {
        self.matrix() * Vector3::from(*x)
    }

    pub fn distance(&self, a: &[f64; 3], b: &[f64; 3]) -> f64 {
        let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
        self.apply(&d).norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpace {
    Latent { warp: WarpModel },
    Climate { transform: ClimateTransform, stations: StationSet },
}

/// A Brown-Resnick model: σ, a covariance function and the space it acts in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub method: Method,
    pub sigma: f64,
    pub cov: CovFunction,
    pub d: usize,
    pub space: ModelSpace,
    pub log_likelihood: f64,
    pub theta_mse: f64,
}

impl FittedModel {
    pub fn stations(&self) -> &StationSet {
        match &self.space {
            ModelSpace::Latent { warp } => &warp.stations,
            ModelSpace::Climate { stations, .. } => stations,
        }
    }

    /// Model correlations between the fitted stations.
    pub fn correlation_matrix(&self) -> DMatrix<f64> {
        match &self.space {
            ModelSpace::Latent { warp } => correlations_from_distances(&self.cov, &warp.embedding.distances()),
            ModelSpace::Climate { transform, stations } => {
                correlations_from_distances(&self.cov, &climate_distances(transform, stations))
            }
        }
    }

    pub fn theta_matrix(&self) -> DMatrix<f64> {
        theta_from_correlations(self.sigma, &self.correlation_matrix())
    }

    /// Model correlation between two arbitrary locations.
    pub fn correlation_at(&self, a: &[f64; 3], b: &[f64; 3]) -> f64 {
        match &self.space {
            ModelSpace::Latent { warp } => model_cov(warp, &self.cov, a, b),
            ModelSpace::Climate { transform, .. } => self.cov.value(transform.distance(a, b)),
        }
    }

    pub fn theta_at(&self, a: &[f64; 3], b: &[f64; 3]) -> f64 {
        extremal_coefficient(self.sigma, self.correlation_at(a, b))
    }

    /// (pairwise log-likelihood, θ^MSE) recomputed from the model's components.
    pub fn rescore(&self, data: &FrechetMatrix, theta_hat: &ExtremalMatrix) -> Result<(f64, f64)> {
        let k = self.correlation_matrix();
        let ll = PreparedData::new(data).pairwise_loglik_with(self.sigma, |i, j| k[(i, j)])?;
        let mse = theta_mse(&theta_from_correlations(self.sigma, &k), &theta_hat.theta)?;
        Ok((ll, mse))
    }
}

fn correlations_from_distances(f: &CovFunction, d: &DMatrix<f64>) -> DMatrix<f64> {
    let n = d.nrows();
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { f.value(d[(i, j)]) })
}

fn theta_from_correlations(sigma: f64, k: &DMatrix<f64>) -> DMatrix<f64> {
    let n = k.nrows();
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { extremal_coefficient(sigma, k[(i, j)]) })
}

fn climate_distances(t: &ClimateTransform, stations: &StationSet) -> DMatrix<f64> {
    let n = stations.len();
    let pts: Vec<Vector3<f64>> = stations.coords.iter().map(|x| t.apply(x)).collect();
    DMatrix::from_fn(n, n, |i, j| (pts[i] - pts[j]).norm())
}

/// One evaluated grid cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub method: Method,
    pub d: usize,
    pub sigma: f64,
    pub alpha: f64,
    pub log_likelihood: f64,
    pub theta_mse: f64,
    pub stress: f64,
}

impl GridRecord {
    fn score(&self, method: Method) -> f64 {
        match method {
            Method::Method1 => -self.theta_mse,
            _ => self.log_likelihood,
        }
    }
}

/// Data shared by every grid cell of a sweep.
#[derive(Debug, Clone, Copy)]
pub struct FitInputs<'a> {
    pub data: &'a FrechetMatrix,
    pub theta_hat: &'a ExtremalMatrix,
    pub stations: &'a StationSet,
}

impl FitInputs<'_> {
    fn check(&self) -> Result<()> {
        let n = self.data.n_stations();
        if self.theta_hat.n() != n || self.stations.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: if self.theta_hat.n() != n { self.theta_hat.n() } else { self.stations.len() },
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    pub sammon: SammonOptions,
    /// Directory holding per-σ K² matrices; read when present, written when missing.
    pub cache_dir: Option<PathBuf>,
}

fn build_ideal(method: Method, inputs: &FitInputs, sigma: f64, eps: f64, opts: &SweepOptions) -> Result<IdealCovMatrix> {
    match method {
        Method::Method1 => ideal_cov_method1(inputs.theta_hat, sigma, eps),
        Method::Method2 => match &opts.cache_dir {
            Some(dir) => io::load_or_build_k2(dir, inputs.data, sigma, eps),
            None => ideal_cov_method2(inputs.data, sigma, eps),
        },
        Method::Classical => Err(Error::Config("the classical model has no ideal covariance".into())),
    }
}

struct CellFit {
    record: GridRecord,
    embedding: Embedding,
}

fn evaluate_cell(
    method: Method,
    inputs: &FitInputs,
    prepared: &PreparedData,
    ideal: &IdealCovMatrix,
    d: usize,
    alpha: f64,
    sammon: &SammonOptions,
) -> Result<Option<CellFit>> {
    let cov = CovFunction::power_exponential(alpha)?;
    let attempt = || -> Result<CellFit> {
        let target = ideal_distances(ideal, &cov)?;
        let res = sammon_mds(&target, d, sammon)?;
        let k = correlations_from_distances(&cov, &res.embedding.distances());
        let ll = prepared.pairwise_loglik_with(ideal.sigma, |i, j| k[(i, j)])?;
        let mse = theta_mse(&theta_from_correlations(ideal.sigma, &k), &inputs.theta_hat.theta)?;
        Ok(CellFit {
            record: GridRecord {
                method,
                d,
                sigma: ideal.sigma,
                alpha,
                log_likelihood: ll,
                theta_mse: mse,
                stress: res.stress,
            },
            embedding: res.embedding,
        })
    };
    match attempt() {
        Ok(c) if c.record.log_likelihood.is_finite() && c.record.theta_mse.is_finite() => Ok(Some(c)),
        Ok(_) => Ok(None),
        // a grid cell whose numerics break down is skipped, not fatal
        Err(e) if e.is_numerical() => Ok(None),
        Err(e) => Err(e),
    }
}

/// Best α for one (d, σ) cell of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaChoice {
    pub d: usize,
    pub sigma: f64,
    pub alpha: f64,
}

/// The (d, σ) ↦ α mapping built by a full sweep.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AlphaMap(pub Vec<AlphaChoice>);

impl AlphaMap {
    pub fn get(&self, d: usize, sigma: f64) -> Option<f64> {
        self.0.iter().find(|c| c.d == d && c.sigma == sigma).map(|c| c.alpha)
    }
}

#[derive(Debug, Clone)]
pub struct MdsSweep {
    pub method: Method,
    pub per_d: BTreeMap<usize, FittedModel>,
    pub records: Vec<GridRecord>,
    pub alpha_map: AlphaMap,
}

fn better(method: Method, a: &GridRecord, b: &GridRecord) -> bool {
    a.score(method) > b.score(method)
}

/// Full (σ, α) sweep for every d in the grid, sharing the per-σ K* matrices.
pub fn fit_mds_sweep(method: Method, inputs: &FitInputs, grid: &GridSpec, opts: &SweepOptions) -> Result<MdsSweep> {
    require_mds(method)?;
    grid.validate()?;
    inputs.check()?;
    let n = inputs.data.n_stations();
    if let Some(&d) = grid.d_set.iter().find(|&&d| d == 0 || d + 2 > n) {
        return Err(Error::DimensionError { d, n });
    }
    let prepared = PreparedData::new(inputs.data);
    let mut records = Vec::new();
    let mut best: BTreeMap<usize, CellFit> = BTreeMap::new();
    let mut alpha_map = Vec::new();
    for &sigma in &grid.sigma_grid {
        let ideal = build_ideal(method, inputs, sigma, grid.epsilon, opts)?;
        let tasks: Vec<(usize, f64)> = grid
            .d_set
            .iter()
            .flat_map(|&d| grid.alpha_grid.iter().map(move |&a| (d, a)))
            .collect();
        let cells: Vec<Option<CellFit>> = tasks
            .par_iter()
            .map(|&(d, a)| evaluate_cell(method, inputs, &prepared, &ideal, d, a, &opts.sammon))
            .collect::<Result<_>>()?;
        // reductions in fixed grid order
        let mut best_alpha: BTreeMap<usize, GridRecord> = BTreeMap::new();
        for cell in cells.into_iter().flatten() {
            records.push(cell.record.clone());
            let d = cell.record.d;
            if best_alpha.get(&d).is_none_or(|b| better(method, &cell.record, b)) {
                best_alpha.insert(d, cell.record.clone());
            }
            if best.get(&d).is_none_or(|b| better(method, &cell.record, &b.record)) {
                best.insert(d, cell);
            }
        }
        for (d, r) in best_alpha {
            alpha_map.push(AlphaChoice { d, sigma, alpha: r.alpha });
        }
    }
    let mut per_d = BTreeMap::new();
    for &d in &grid.d_set {
        let cell = best
            .remove(&d)
            .ok_or_else(|| Error::NonConvergence(format!("no grid cell could be evaluated for d = {d}")))?;
        per_d.insert(d, finish_model(method, inputs.stations, cell)?);
    }
    Ok(MdsSweep {
        method,
        per_d,
        records,
        alpha_map: AlphaMap(alpha_map),
    })
}

fn finish_model(method: Method, stations: &StationSet, cell: CellFit) -> Result<FittedModel> {
    let warp = fit_warp(stations, &cell.embedding)?;
    Ok(FittedModel {
        method,
        sigma: cell.record.sigma,
        cov: CovFunction::power_exponential(cell.record.alpha)?,
        d: cell.record.d,
        space: ModelSpace::Latent { warp },
        log_likelihood: cell.record.log_likelihood,
        theta_mse: cell.record.theta_mse,
    })
}

/// Best (σ, α) model at a single latent dimension `d`.
pub fn fit_mds_model(method: Method, inputs: &FitInputs, grid: &GridSpec, d: usize, opts: &SweepOptions) -> Result<FittedModel> {
    let single = GridSpec {
        d_set: vec![d],
        ..grid.clone()
    };
    let mut sweep = fit_mds_sweep(method, inputs, &single, opts)?;
    sweep.per_d.remove(&d).ok_or(Error::MissingDimension(d))
}

/// Forward dimension selection on per-d scores: θ^MSE for method 1 (accept when
/// `1 − s_{d+1}/s_d > r1`), log-likelihood for method 2 (accept when
/// `(s_{d+1} − s_d)/|s_d| > r2`). Stops at the first rejected step.
pub fn select_dimension_by_scores(scores: &BTreeMap<usize, f64>, grid: &GridSpec, method: Method) -> Result<usize> {
    require_mds(method)?;
    let mut ds = grid.d_set.clone();
    ds.sort_unstable();
    let first = *ds.first().ok_or(Error::EmptyGrid("d"))?;
    let score = |d: usize| scores.get(&d).copied().ok_or(Error::MissingDimension(d));
    let mut chosen = first;
    let mut current = score(first)?;
    for &d in &ds[1..] {
        let next = score(d)?;
        let accept = match method {
            Method::Method1 => 1.0 - next / current > grid.r1,
            _ => (next - current) / current.abs() > grid.r2,
        };
        if !accept {
            break;
        }
        chosen = d;
        current = next;
    }
    Ok(chosen)
}

pub fn select_dimension(per_d: &BTreeMap<usize, FittedModel>, grid: &GridSpec, method: Method) -> Result<usize> {
    let scores = per_d
        .iter()
        .map(|(&d, m)| {
            (
                d,
                match method {
                    Method::Method1 => m.theta_mse,
                    _ => m.log_likelihood,
                },
            )
        })
        .collect();
    select_dimension_by_scores(&scores, grid, method)
}

#[derive(Debug, Clone)]
pub struct ClassicalOptions {
    pub max_cycles: usize,
    /// Stop when a full cycle improves the log-likelihood by less than this, relatively.
    pub rel_tol: f64,
    /// Coarse grid points per line search before golden-section refinement.
    pub coarse: usize,
}

impl Default for ClassicalOptions {
    fn default() -> Self {
        Self {
            max_cycles: 100,
            rel_tol: 1e-6,
            coarse: 12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClassicalFit {
    pub model: FittedModel,
    /// Log-likelihood after each completed cycle, starting with the initial point.
    pub trace: Vec<f64>,
    pub converged: bool,
}

// parameter vector: σ, β, ln c1, ln c2, ln c3, α
const C_BOUNDS: (f64, f64) = (1e-6, 1e2);

fn classical_bounds() -> [(f64, f64); 6] {
    let lc = (C_BOUNDS.0.ln(), C_BOUNDS.1.ln());
    [
        (0.5, 6.0),
        (-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2),
        lc,
        lc,
        lc,
        (0.01, 2.0),
    ]
}

fn classical_parts(x: &[f64; 6]) -> (f64, ClimateTransform, CovFunction) {
    let t = ClimateTransform {
        beta: x[1],
        c1: x[2].exp(),
        c2: x[3].exp(),
        c3: x[4].exp(),
    };
    (x[0], t, CovFunction::PowerExponential { alpha: x[5] })
}

fn classical_loglik(prepared: &PreparedData, stations: &StationSet, x: &[f64; 6]) -> f64 {
    let (sigma, t, cov) = classical_parts(x);
    let dist = climate_distances(&t, stations);
    match prepared.pairwise_loglik_with(sigma, |i, j| cov.value(dist[(i, j)])) {
        Ok(v) if v.is_finite() => v,
        _ => f64::NEG_INFINITY,
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        1.0
    } else {
        v[v.len() / 2]
    }
}

/// Climate-space baseline: cyclic line searches over (σ, β, c1, c2, c3, α).
pub fn fit_classical(data: &FrechetMatrix, stations: &StationSet, opts: &ClassicalOptions) -> Result<ClassicalFit> {
    let n = data.n_stations();
    if stations.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: stations.len(),
        });
    }
    if n < 2 {
        return Err(Error::InsufficientStations("the classical fit needs two stations".into()));
    }
    let prepared = PreparedData::new(data);
    let bounds = classical_bounds();
    let mut planar = Vec::new();
    let mut vertical = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            planar.push(stations.planar_distance(i, j));
            vertical.push((stations.coords[i][2] - stations.coords[j][2]).abs());
        }
    }
    let c12 = 1.0 / median(planar).max(1e-9);
    let mv = median(vertical);
    let c3 = if mv > 0.0 { 0.1 / mv } else { c12 * 1e-3 };
    let mut x = [2.0, 0.0, c12.ln(), c12.ln(), c3.ln(), 1.0];
    for (v, b) in x.iter_mut().zip(&bounds) {
        *v = v.clamp(b.0, b.1);
    }
    let mut current = classical_loglik(&prepared, stations, &x);
    let mut trace = vec![current];
    let mut converged = false;
    for _ in 0..opts.max_cycles {
        let start = current;
        for p in 0..6 {
            let (lo, hi) = bounds[p];
            let eval = |v: f64| {
                let mut y = x;
                y[p] = v;
                classical_loglik(&prepared, stations, &y)
            };
            let grid = linspace(lo, hi, opts.coarse.max(3));
            let vals: Vec<f64> = grid.par_iter().map(|&v| eval(v)).collect();
            let (gi, _) = vals
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
            let a = grid[gi.saturating_sub(1)];
            let b = grid[(gi + 1).min(grid.len() - 1)];
            let mut cands = vec![(grid[gi], vals[gi])];
            cands.push(golden_max(eval, a, b, 1e-5 * (hi - lo)));
            // refine around the incumbent too, so local improvements are not lost
            let w = 0.05 * (hi - lo);
            cands.push(golden_max(eval, (x[p] - w).max(lo), (x[p] + w).min(hi), 1e-6 * (hi - lo)));
            for (v, ll) in cands {
                if ll > current {
                    current = ll;
                    x[p] = v;
                }
            }
        }
        trace.push(current);
        if start.is_finite() && (current - start) <= opts.rel_tol * start.abs() {
            converged = true;
            break;
        }
    }
    if !current.is_finite() {
        return Err(Error::NonConvergence("classical pairwise likelihood is not finite".into()));
    }
    let (sigma, transform, cov) = classical_parts(&x);
    let theta_hat = extremal_matrix(data)?;
    let mut model = FittedModel {
        method: Method::Classical,
        sigma,
        cov,
        d: 3,
        space: ModelSpace::Climate {
            transform,
            stations: stations.clone(),
        },
        log_likelihood: current,
        theta_mse: 0.0,
    };
    model.theta_mse = theta_mse(&model.theta_matrix(), &theta_hat.theta)?;
    Ok(ClassicalFit { model, trace, converged })
}

/// Greedy max–min (farthest-point) selection of `m` stations in the
/// (easting, northing) plane, starting from `first`. Ties go to the lower index.
pub fn space_filling(stations: &StationSet, m: usize, first: usize) -> Vec<usize> {
    let n = stations.len();
    if m == 0 || n == 0 {
        return vec![];
    }
    let mut chosen = vec![first];
    let mut gap: Vec<f64> = (0..n).map(|j| stations.planar_distance(first, j)).collect();
    while chosen.len() < m.min(n) {
        let (next, _) = gap
            .iter()
            .enumerate()
            .filter(|(j, _)| !chosen.contains(j))
            .fold((usize::MAX, f64::NEG_INFINITY), |acc, (j, &g)| if g > acc.1 { (j, g) } else { acc });
        chosen.push(next);
        for (j, g) in gap.iter_mut().enumerate() {
            *g = g.min(stations.planar_distance(next, j));
        }
    }
    chosen
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutSplit {
    pub n2: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Draws n2 uniformly from `n2_range` (inclusive) and picks the test stations
/// by space-filling from a random first station.
pub fn holdout_split(stations: &StationSet, n2_range: (usize, usize), min_train: usize, seed: u64) -> Result<HoldoutSplit> {
    let (lo, hi) = n2_range;
    if lo > hi || lo == 0 {
        return Err(Error::Config(format!("invalid hold-out range [{lo}, {hi}]")));
    }
    let n = stations.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n2 = rng.random_range(lo..=hi);
    if n < n2 + min_train {
        return Err(Error::InsufficientStations(format!(
            "{n} stations cannot hold out {n2} and keep {min_train} for training"
        )));
    }
    let first = rng.random_range(0..n);
    let mut test = space_filling(stations, n2, first);
    test.sort_unstable();
    let train = (0..n).filter(|i| !test.contains(i)).collect();
    Ok(HoldoutSplit { n2, train, test })
}

#[derive(Debug, Clone)]
pub struct HoldoutOptions {
    pub method: Method,
    pub d: usize,
    pub n2_range: (usize, usize),
    pub seed: u64,
    pub sweep: SweepOptions,
}

#[derive(Debug, Clone)]
pub struct HoldoutResult {
    pub split: HoldoutSplit,
    /// Model fitted on the training stations only.
    pub model: FittedModel,
    /// Model θ over all stations, in input order.
    pub theta_model: DMatrix<f64>,
    /// Scores over all stations, test stations placed by the warp.
    pub log_likelihood: f64,
    pub theta_mse: f64,
    /// Mean squared θ misfit over distinct pairs of training stations.
    pub train_pair_mse: f64,
    /// Mean squared θ misfit over distinct pairs of test stations.
    pub test_pair_mse: f64,
    /// Mean squared θ misfit over train–test pairs.
    pub mixed_pair_mse: f64,
}

pub fn holdout_experiment(
    data: &FrechetMatrix,
    stations: &StationSet,
    alpha_map: &AlphaMap,
    grid: &GridSpec,
    opts: &HoldoutOptions,
) -> Result<HoldoutResult> {
    let split = holdout_split(stations, opts.n2_range, opts.d + 2, opts.seed)?;
    holdout_with_split(data, stations, alpha_map, grid, opts, split)
}

/// Fits on `split.train` with α taken from `alpha_map` at each σ, then scores all stations.
pub fn holdout_with_split(
    data: &FrechetMatrix,
    stations: &StationSet,
    alpha_map: &AlphaMap,
    grid: &GridSpec,
    opts: &HoldoutOptions,
    split: HoldoutSplit,
) -> Result<HoldoutResult> {
    require_mds(opts.method)?;
    grid.validate()?;
    if stations.len() != data.n_stations() {
        return Err(Error::DimensionMismatch {
            expected: data.n_stations(),
            got: stations.len(),
        });
    }
    if split.train.len() < opts.d + 2 {
        return Err(Error::InsufficientStations(format!(
            "{} training stations for d = {}",
            split.train.len(),
            opts.d
        )));
    }
    let train_data = data.select_stations(&split.train);
    let train_stations = stations.subset(&split.train);
    let train_theta = extremal_matrix(&train_data)?;
    let inputs = FitInputs {
        data: &train_data,
        theta_hat: &train_theta,
        stations: &train_stations,
    };
    let prepared = PreparedData::new(&train_data);
    let mut best: Option<CellFit> = None;
    for &sigma in &grid.sigma_grid {
        let Some(alpha) = alpha_map.get(opts.d, sigma) else { continue };
        let ideal = build_ideal(opts.method, &inputs, sigma, grid.epsilon, &opts.sweep)?;
        let cell = evaluate_cell(opts.method, &inputs, &prepared, &ideal, opts.d, alpha, &opts.sweep.sammon)?;
        if let Some(c) = cell {
            if best.as_ref().is_none_or(|b| better(opts.method, &c.record, &b.record)) {
                best = Some(c);
            }
        }
    }
    let best = best.ok_or(Error::EmptyGrid("no sigma of the grid has an alpha for this d"))?;
    let model = finish_model(opts.method, &train_stations, best)?;
    let ModelSpace::Latent { warp } = &model.space else { unreachable!() };

    // latent positions: embedding rows for training stations, warp for test stations
    let n = stations.len();
    let mut latent = DMatrix::zeros(n, opts.d);
    for (r, &i) in split.train.iter().enumerate() {
        latent.set_row(i, &warp.embedding.coords.row(r));
    }
    for &i in &split.test {
        let y = warp.warp(&stations.coords[i]);
        for (c, v) in y.into_iter().enumerate() {
            latent[(i, c)] = v;
        }
    }
    let all = Embedding::new(latent)?;
    let k = correlations_from_distances(&model.cov, &all.distances());
    let theta_model = theta_from_correlations(model.sigma, &k);
    let theta_hat = extremal_matrix(data)?;
    let ll = PreparedData::new(data).pairwise_loglik_with(model.sigma, |i, j| k[(i, j)])?;
    let mse = theta_mse(&theta_model, &theta_hat.theta)?;
    let [train_pair_mse, test_pair_mse, mixed_pair_mse] = pair_group_mse(&theta_model, &theta_hat.theta, &split.test);
    Ok(HoldoutResult {
        split,
        model,
        theta_model,
        log_likelihood: ll,
        theta_mse: mse,
        train_pair_mse,
        test_pair_mse,
        mixed_pair_mse,
    })
}

impl HoldoutResult {
    /// Train, test and mixed pair misfits of the model θ against another θ matrix.
    pub fn pair_misfits(&self, reference: &DMatrix<f64>) -> [f64; 3] {
        pair_group_mse(&self.theta_model, reference, &self.split.test)
    }
}

fn pair_group_mse(a: &DMatrix<f64>, b: &DMatrix<f64>, test: &[usize]) -> [f64; 3] {
    let n = a.nrows();
    let is_test: Vec<bool> = (0..n).map(|i| test.contains(&i)).collect();
    let mut sums = [(0.0, 0usize); 3];
    for i in 0..n {
        for j in (i + 1)..n {
            let e = (a[(i, j)] - b[(i, j)]).powi(2);
            let slot = match (is_test[i], is_test[j]) {
                (false, false) => 0,
                (true, true) => 1,
                _ => 2,
            };
            sums[slot].0 += e;
            sums[slot].1 += 1;
        }
    }
    sums.map(|s| if s.1 > 0 { s.0 / s.1 as f64 } else { f64::NAN })
}
