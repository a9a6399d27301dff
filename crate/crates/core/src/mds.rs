//! Multidimensional scaling: Torgerson classical scaling and Sammon mapping.
//!
//! Sammon's descent starts from the classical-scaling configuration and takes
//! diagonal-Newton steps `y ← y − λ·g/|h|` on the Sammon stress, halving λ
//! whenever a step would raise the stress.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// n×d latent coordinates, one row per station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub coords: DMatrix<f64>,
}

impl Embedding {
    pub fn new(coords: DMatrix<f64>) -> Result<Self> {
        if coords.ncols() == 0 {
            return Err(Error::DimensionError { d: 0, n: coords.nrows() });
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        Ok(Self { coords })
    }

    pub fn n(&self) -> usize {
        self.coords.nrows()
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        (self.coords.row(i) - self.coords.row(j)).norm()
    }

    pub fn distances(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = self.distance(i, j);
                d[(i, j)] = v;
                d[(j, i)] = v;
            }
        }
        d
    }
}

/// Symmetric, nonnegative target dissimilarities with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DissimilarityMatrix {
    d: DMatrix<f64>,
}

impl DissimilarityMatrix {
    pub fn new(d: DMatrix<f64>) -> Result<Self> {
        let n = d.nrows();
        if d.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: d.ncols(),
            });
        }
        for i in 0..n {
            if d[(i, i)] != 0.0 {
                return Err(Error::OutOfRange {
                    value: d[(i, i)],
                    range: "dissimilarity diagonal must be 0",
                });
            }
            for j in (i + 1)..n {
                let v = d[(i, j)];
                if !(v >= 0.0 && v.is_finite()) || v != d[(j, i)] {
                    return Err(Error::OutOfRange {
                        value: v,
                        range: "dissimilarities must be symmetric, finite and >= 0",
                    });
                }
            }
        }
        Ok(Self { d })
    }

    /// Euclidean distances between the rows of `points`.
    pub fn from_points(points: &DMatrix<f64>) -> Self {
        let e = Embedding {
            coords: points.clone(),
        };
        Self { d: e.distances() }
    }

    pub fn n(&self) -> usize {
        self.d.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[(i, j)]
    }
}

/// Torgerson scaling: top-d eigenpairs of B = −½ J D² J, negative eigenvalues clamped to 0.
pub fn classical_scaling(d: &DissimilarityMatrix, dim: usize) -> Result<Embedding> {
    let n = d.n();
    if dim == 0 || dim + 1 > n {
        return Err(Error::DimensionError { d: dim, n });
    }
    let d2 = d.matrix().map(|v| v * v);
    let row_means: Vec<f64> = (0..n).map(|i| d2.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (d2[(i, j)] - row_means[i] - row_means[j] + grand));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut coords = DMatrix::zeros(n, dim);
    for (c, &idx) in order.iter().take(dim).enumerate() {
        let scale = eig.eigenvalues[idx].max(0.0).sqrt();
        for i in 0..n {
            coords[(i, c)] = eig.eigenvectors[(i, idx)] * scale;
        }
    }
    Embedding::new(coords)
}

fn check_dims(x: &Embedding, d: &DissimilarityMatrix) -> Result<()> {
    if x.n() != d.n() {
        return Err(Error::DimensionMismatch {
            expected: d.n(),
            got: x.n(),
        });
    }
    Ok(())
}

/// Σ_{i<j} w_ij (d_ij(X) − D_ij)², unit weights when `weights` is `None`.
pub fn raw_stress(x: &Embedding, d: &DissimilarityMatrix, weights: Option<&DMatrix<f64>>) -> Result<f64> {
    check_dims(x, d)?;
    if let Some(w) = weights {
        if w.shape() != (d.n(), d.n()) {
            return Err(Error::DimensionMismatch {
                expected: d.n(),
                got: w.nrows(),
            });
        }
    }
    let n = d.n();
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let r = x.distance(i, j) - d.get(i, j);
            let w = weights.map_or(1.0, |w| w[(i, j)]);
            s += w * r * r;
        }
    }
    Ok(s)
}

fn check_positive(d: &DissimilarityMatrix) -> Result<()> {
    let n = d.n();
    for i in 0..n {
        for j in (i + 1)..n {
            if d.get(i, j) <= 0.0 {
                return Err(Error::ZeroDissimilarity { i, j });
            }
        }
    }
    Ok(())
}

/// Σ_{i<j} (d_ij(X) − D_ij)² / D_ij.
pub fn sammon_stress(x: &Embedding, d: &DissimilarityMatrix) -> Result<f64> {
    check_dims(x, d)?;
    check_positive(d)?;
    Ok(stress_unchecked(&x.coords, d))
}

fn stress_unchecked(y: &DMatrix<f64>, d: &DissimilarityMatrix) -> f64 {
    let n = y.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dij = (y.row(i) - y.row(j)).norm();
            let r = dij - d.get(i, j);
            s += r * r / d.get(i, j);
        }
    }
    s
}

/// Gradient and diagonal of the Hessian of the Sammon stress. Returns `None`
/// when two points coincide.
fn gradient_and_diag(y: &DMatrix<f64>, d: &DissimilarityMatrix) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let (n, dim) = y.shape();
    let mut g = DMatrix::zeros(n, dim);
    let mut h = DMatrix::zeros(n, dim);
    for p in 0..n {
        for j in 0..n {
            if j == p {
                continue;
            }
            let target = d.get(p, j);
            let diff = y.row(p) - y.row(j);
            let dist = diff.norm();
            if dist == 0.0 {
                return None;
            }
            let resid = dist - target;
            for k in 0..dim {
                let u = diff[k];
                g[(p, k)] += 2.0 * resid / target * u / dist;
                h[(p, k)] += 2.0 / target * (resid / dist + u * u * target / (dist * dist * dist));
            }
        }
    }
    Some((g, h))
}

/// Analytic gradient of [`sammon_stress`] with respect to every coordinate.
pub fn sammon_gradient(x: &Embedding, d: &DissimilarityMatrix) -> Result<DMatrix<f64>> {
    check_dims(x, d)?;
    check_positive(d)?;
    gradient_and_diag(&x.coords, d)
        .map(|(g, _)| g)
        .ok_or(Error::NonFiniteGradient)
}

#[derive(Debug, Clone, Copy)]
pub struct SammonOptions {
    pub max_iter: usize,
    /// Stop once the relative stress improvement of an accepted step falls below this.
    pub rel_tol: f64,
    pub step: f64,
    pub max_halvings: usize,
}

impl Default for SammonOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            rel_tol: 1e-9,
            step: 0.3,
            max_halvings: 30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SammonResult {
    pub embedding: Embedding,
    pub stress: f64,
    pub initial_stress: f64,
    pub iterations: usize,
    /// Stress after every accepted step, starting with the initial configuration.
    pub history: Vec<f64>,
}

/// Separates coincident points by a deterministic 1e-9 nudge.
fn jitter_collisions(y: &mut DMatrix<f64>) {
    let n = y.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (y.row(i) - y.row(j)).norm() == 0.0 {
                let k = j % y.ncols();
                y[(j, k)] += 1e-9 * (1.0 + j as f64 / n as f64);
            }
        }
    }
}

/// Sammon mapping into `dim` dimensions, initialized by classical scaling.
pub fn sammon_mds(d: &DissimilarityMatrix, dim: usize, opts: &SammonOptions) -> Result<SammonResult> {
    check_positive(d)?;
    let init = classical_scaling(d, dim)?;
    let mut y = init.coords;
    jitter_collisions(&mut y);
    let mut stress = stress_unchecked(&y, d);
    let initial_stress = stress;
    let mut history = vec![stress];
    let mut iterations = 0;

    while iterations < opts.max_iter && stress > 0.0 {
        iterations += 1;
        let (g, h) = match gradient_and_diag(&y, d) {
            Some(gh) => gh,
            None => {
                jitter_collisions(&mut y);
                stress = stress_unchecked(&y, d);
                continue;
            }
        };
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        let dir = g.zip_map(&h, |gv, hv| if hv.abs() > 1e-12 { gv / hv.abs() } else { gv });
        let mut lambda = opts.step;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let cand = &y - &dir * lambda;
            let s = stress_unchecked(&cand, d);
            if s < stress {
                accepted = Some((cand, s));
                break;
            }
            lambda *= 0.5;
        }
        let Some((cand, s)) = accepted else { break };
        let improvement = (stress - s) / stress;
        y = cand;
        stress = s;
        history.push(stress);
        if improvement < opts.rel_tol {
            break;
        }
    }
    Ok(SammonResult {
        embedding: Embedding::new(y)?,
        stress,
        initial_stress,
        iterations,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, dim: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, dim, |_, _| rng.random_range(-5.0..5.0))
    }

    #[test]
    fn two_points() {
        let d = DissimilarityMatrix::new(DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0])).unwrap();
        let e = classical_scaling(&d, 1).unwrap();
        let mut v = [e.coords[(0, 0)], e.coords[(1, 0)]];
        v.sort_by(f64::total_cmp);
        assert!((v[0] + 1.0).abs() < 1e-12 && (v[1] - 1.0).abs() < 1e-12);
        assert!(matches!(classical_scaling(&d, 2), Err(Error::DimensionError { .. })));
    }

    #[test]
    fn equilateral_triangle() {
        let d = DissimilarityMatrix::new(DMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 1.0 })).unwrap();
        let e = classical_scaling(&d, 2).unwrap();
        assert!((e.distances() - d.matrix()).amax() < 1e-10);
    }

    #[test]
    fn euclidean_recovery_and_centering() {
        let pts = random_points(10, 3, 4);
        let d = DissimilarityMatrix::from_points(&pts);
        let e = classical_scaling(&d, 3).unwrap();
        assert!((e.distances() - d.matrix()).amax() < 1e-8);
        for c in 0..3 {
            assert!(e.coords.column(c).mean().abs() < 1e-10);
        }
    }

    #[test]
    fn stress_examples() {
        let x = Embedding::new(DMatrix::from_row_slice(2, 1, &[0.0, 3.0])).unwrap();
        let d = DissimilarityMatrix::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert_eq!(raw_stress(&x, &d, None).unwrap(), 4.0);
        let x2 = Embedding::new(DMatrix::from_row_slice(2, 1, &[0.0, 2.0])).unwrap();
        assert_eq!(sammon_stress(&x2, &d).unwrap(), 1.0);

        let pts = random_points(6, 2, 1);
        let target = DissimilarityMatrix::from_points(&random_points(6, 3, 2));
        let x = Embedding::new(pts).unwrap();
        let w = target.matrix().map(|v| if v > 0.0 { 1.0 / v } else { 0.0 });
        let a = raw_stress(&x, &target, Some(&w)).unwrap();
        let b = sammon_stress(&x, &target).unwrap();
        assert!((a - b).abs() <= 1e-12 * b);

        let zero = DissimilarityMatrix::new(DMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(sammon_stress(&x2, &zero), Err(Error::ZeroDissimilarity { .. })));
    }

    #[test]
    fn stress_rotation_invariant() {
        let pts = random_points(8, 2, 9);
        let target = DissimilarityMatrix::from_points(&random_points(8, 4, 10));
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let a = sammon_stress(&Embedding::new(pts.clone()).unwrap(), &target).unwrap();
        let b = sammon_stress(&Embedding::new(&pts * rot).unwrap(), &target).unwrap();
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let target = DissimilarityMatrix::from_points(&random_points(7, 4, 12));
        let x = Embedding::new(random_points(7, 2, 13)).unwrap();
        let g = sammon_gradient(&x, &target).unwrap();
        let h = 1e-6;
        for i in 0..7 {
            for k in 0..2 {
                let mut p = x.clone();
                p.coords[(i, k)] += h;
                let mut m = x.clone();
                m.coords[(i, k)] -= h;
                let fd = (sammon_stress(&p, &target).unwrap() - sammon_stress(&m, &target).unwrap()) / (2.0 * h);
                assert!((fd - g[(i, k)]).abs() <= 1e-6 * g[(i, k)].abs().max(1.0), "{fd} vs {}", g[(i, k)]);
            }
        }
    }

    #[test]
    fn sammon_realizable_and_reduction() {
        let d = DissimilarityMatrix::from_points(&random_points(20, 2, 5));
        let r = sammon_mds(&d, 2, &SammonOptions::default()).unwrap();
        assert!(r.stress < 1e-6);

        let d5 = DissimilarityMatrix::from_points(&random_points(20, 5, 6));
        let r = sammon_mds(&d5, 2, &SammonOptions::default()).unwrap();
        assert!(r.stress < r.initial_stress);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(sammon_stress(&r.embedding, &d5).unwrap(), r.stress);
    }

    #[test]
    fn collinear_three_points() {
        let pts = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 3.0]);
        let d = DissimilarityMatrix::from_points(&pts);
        let r = sammon_mds(&d, 1, &SammonOptions::default()).unwrap();
        assert!(r.stress < 1e-10);
    }
}
