use latent_extremes::covariance::CovFunction;
use latent_extremes::madogram::{extremal_matrix, theta_mse};
use latent_extremes::pipeline::{
    fit_classical, fit_mds_sweep, holdout_split, holdout_with_split, ClassicalOptions, ClimateTransform, FitInputs,
    GridSpec, HoldoutOptions, Method, ModelSpace, SweepOptions,
};
use latent_extremes::simulator::{simulate_field, true_theta_matrix, SimSpec, WarpedGrid};
use latent_extremes::{FrechetMatrix, StationSet};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid_stations(nx: usize, ny: usize, spacing: f64, elev: impl Fn(usize) -> f64) -> StationSet {
    let n = nx * ny;
    StationSet::new(
        (0..n).map(|i| format!("P{i:02}")).collect(),
        (0..n)
            .map(|i| [(i % nx) as f64 * spacing, (i / nx) as f64 * spacing, elev(i)])
            .collect(),
    )
    .unwrap()
}

fn theta_of(sigma: f64, cov: &CovFunction, d: &DMatrix<f64>) -> DMatrix<f64> {
    let n = d.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            latent_extremes::brown_resnick::extremal_coefficient(sigma, cov.value(d[(i, j)]))
        }
    })
}

#[test]
fn method1_beats_a_misplaced_embedding_on_a_stationary_field() {
    let stations = grid_stations(5, 5, 1.0, |_| 500.0);
    let points = DMatrix::from_fn(25, 2, |i, c| stations.coords[i][c] / 3.0);
    let cov = CovFunction::PowerExponential { alpha: 2.0 };
    let spec = SimSpec {
        station_ids: stations.ids.clone(),
        ..SimSpec::new(points.clone(), 2.0, cov, 300, 11)
    };
    let data = simulate_field(&spec).unwrap();
    let theta_hat = extremal_matrix(&data).unwrap();
    let inputs = FitInputs {
        data: &data,
        theta_hat: &theta_hat,
        stations: &stations,
    };
    let grid = GridSpec {
        d_set: vec![2],
        ..GridSpec::reduced()
    };
    let sweep = fit_mds_sweep(Method::Method1, &inputs, &grid, &SweepOptions::default()).unwrap();
    let fitted = &sweep.per_d[&2];

    // argmin over every evaluated cell
    for r in &sweep.records {
        assert!(fitted.theta_mse <= r.theta_mse + 1e-15);
    }
    let (_, rescored) = fitted.rescore(&data, &theta_hat).unwrap();
    assert_eq!(rescored, fitted.theta_mse);

    // same σ and α, stations scattered at random over the same extent
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let random = DMatrix::from_fn(25, 2, |_, _| rng.random_range(0.0..4.0 / 3.0));
    let d_rand = DMatrix::from_fn(25, 25, |i, j| (random.row(i) - random.row(j)).norm());
    let mse_rand = theta_mse(&theta_of(2.0, &cov, &d_rand), &theta_hat.theta).unwrap();
    assert!(
        fitted.theta_mse * 10.0 <= mse_rand,
        "method 1 {} vs random {}",
        fitted.theta_mse,
        mse_rand
    );
}

#[test]
fn method2_selection_is_the_grid_argmax() {
    let scenario = WarpedGrid {
        nx: 5,
        ny: 4,
        p: 100,
        ..WarpedGrid::default()
    };
    let data = simulate_field(&scenario.spec()).unwrap();
    let stations = scenario.stations();
    let theta_hat = extremal_matrix(&data).unwrap();
    let inputs = FitInputs {
        data: &data,
        theta_hat: &theta_hat,
        stations: &stations,
    };
    let grid = GridSpec {
        sigma_grid: vec![1.5, 2.5],
        alpha_grid: vec![0.5, 1.0, 1.5, 2.0],
        d_set: vec![2, 3],
        ..GridSpec::reduced()
    };
    let sweep = fit_mds_sweep(Method::Method2, &inputs, &grid, &SweepOptions::default()).unwrap();
    for (d, m) in &sweep.per_d {
        let best = sweep
            .records
            .iter()
            .filter(|r| r.d == *d)
            .map(|r| r.log_likelihood)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(m.log_likelihood, best);
        let (ll, _) = m.rescore(&data, &theta_hat).unwrap();
        assert_eq!(ll, m.log_likelihood);
    }
    assert_eq!(sweep.records.len(), 2 * 4 * 2);
}

/// Stations on a jittered grid with varied elevation, simulated in a known climate space.
fn climate_scenario(p: usize, seed: u64) -> (StationSet, ClimateTransform, FrechetMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 30;
    let coords: Vec<[f64; 3]> = (0..n)
        .map(|i| {
            [
                (i % 6) as f64 * 12.0 + rng.random_range(-3.0..3.0),
                (i / 6) as f64 * 12.0 + rng.random_range(-3.0..3.0),
                rng.random_range(200.0..1800.0),
            ]
        })
        .collect();
    let stations = StationSet::new((0..n).map(|i| format!("C{i:02}")).collect(), coords).unwrap();
    let truth = ClimateTransform {
        beta: 0.5,
        c1: 1.0 / 25.0,
        c2: 1.0 / 60.0,
        c3: 1.0 / 1500.0,
    };
    let points = DMatrix::from_fn(n, 3, |i, c| truth.apply(&stations.coords[i])[c]);
    let spec = SimSpec {
        station_ids: stations.ids.clone(),
        ..SimSpec::new(points, 2.0, CovFunction::PowerExponential { alpha: 1.0 }, p, seed)
    };
    (stations, truth, simulate_field(&spec).unwrap())
}

#[test]
fn classical_fit_recovers_climate_distances() {
    let (stations, truth, data) = climate_scenario(1000, 21);
    let fit = fit_classical(&data, &stations, &ClassicalOptions::default()).unwrap();
    assert!(fit.trace.windows(2).all(|w| w[1] >= w[0]), "trace must not decrease");
    let ModelSpace::Climate { transform, .. } = &fit.model.space else {
        panic!("classical fit must live in climate space")
    };
    let n = stations.len();
    let (mut se, mut ss) = (0.0, 0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (&stations.coords[i], &stations.coords[j]);
            let t = truth.distance(a, b);
            se += (transform.distance(a, b) - t).powi(2);
            ss += t * t;
        }
    }
    let rel_rmse = (se / ss).sqrt();
    assert!(rel_rmse < 0.05, "relative distance RMSE {rel_rmse}, fit {:?}", transform);
}

fn holdout_scenario() -> WarpedGrid {
    WarpedGrid {
        nx: 6,
        ny: 5,
        p: 120,
        ..WarpedGrid::default()
    }
}

fn holdout_setup() -> (StationSet, FrechetMatrix, GridSpec, HoldoutOptions) {
    let scenario = holdout_scenario();
    let grid = GridSpec {
        sigma_grid: vec![1.5, 2.5],
        alpha_grid: vec![0.5, 1.0, 1.5],
        d_set: vec![3],
        ..GridSpec::reduced()
    };
    let opts = HoldoutOptions {
        method: Method::Method1,
        d: 3,
        n2_range: (6, 6),
        seed: 5,
        sweep: SweepOptions::default(),
    };
    (scenario.stations(), simulate_field(&scenario.spec()).unwrap(), grid, opts)
}

fn alpha_map(data: &FrechetMatrix, stations: &StationSet, grid: &GridSpec, method: Method) -> latent_extremes::pipeline::AlphaMap {
    let theta_hat = extremal_matrix(data).unwrap();
    let inputs = FitInputs {
        data,
        theta_hat: &theta_hat,
        stations,
    };
    fit_mds_sweep(method, &inputs, grid, &SweepOptions::default()).unwrap().alpha_map
}

#[test]
fn holdout_is_reproducible_and_does_not_leak() {
    let (stations, data, grid, opts) = holdout_setup();
    let amap = alpha_map(&data, &stations, &grid, opts.method);
    let split = holdout_split(&stations, opts.n2_range, opts.d + 2, opts.seed).unwrap();
    assert_eq!(split.test.len(), 6);

    let a = holdout_with_split(&data, &stations, &amap, &grid, &opts, split.clone()).unwrap();
    let b = holdout_with_split(&data, &stations, &amap, &grid, &opts, split.clone()).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.log_likelihood.to_bits(), b.log_likelihood.to_bits());
    assert_eq!(a.test_pair_mse.to_bits(), b.test_pair_mse.to_bits());

    let mut perturbed = data.values.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for &t in &split.test {
        for v in perturbed.column_mut(t).iter_mut() {
            *v = 1.0 / rng.random_range(0.01f64..1.0).ln().abs();
        }
    }
    let perturbed = FrechetMatrix::new(perturbed, data.station_ids.clone(), data.years.clone()).unwrap();
    let c = holdout_with_split(&perturbed, &stations, &amap, &grid, &opts, split).unwrap();
    assert_eq!(a.model, c.model, "training model changed when only test data moved");
    assert_ne!(a.test_pair_mse, c.test_pair_mse);
}

#[test]
fn holdout_test_pairs_generalize_like_training_pairs() {
    let (stations, data, grid, opts) = holdout_setup();
    let opts = HoldoutOptions {
        method: Method::Method2,
        ..opts
    };
    let amap = alpha_map(&data, &stations, &grid, opts.method);
    let split = holdout_split(&stations, opts.n2_range, opts.d + 2, opts.seed).unwrap();
    let res = holdout_with_split(&data, &stations, &amap, &grid, &opts, split).unwrap();
    // against the simulated truth, so sampling noise in θ̂ does not enter either side
    let truth = true_theta_matrix(&holdout_scenario().spec());
    let [train, test, _] = res.pair_misfits(&truth);
    assert!(test <= 2.0 * train, "test {test} vs train {train}");
    let [train_hat, test_hat, _] = res.pair_misfits(&extremal_matrix(&data).unwrap().theta);
    assert_eq!((train_hat, test_hat), (res.train_pair_mse, res.test_pair_mse));
}
