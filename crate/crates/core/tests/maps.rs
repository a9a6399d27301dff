use latent_extremes::covariance::CovFunction;
use latent_extremes::io::{export_observed_theta_map, export_theta_map, MapGrid, MapPoint, Reference};
use latent_extremes::madogram::{extremal_matrix, ExtremalMatrix};
use latent_extremes::pipeline::{fit_mds_model, ClimateTransform, FitInputs, FittedModel, GridSpec, Method, ModelSpace, SweepOptions};
use latent_extremes::simulator::{simulate_field, WarpedGrid};
use latent_extremes::StationSet;
use nalgebra::{DMatrix, DVector};

fn small_scenario() -> WarpedGrid {
    WarpedGrid {
        nx: 5,
        ny: 4,
        p: 100,
        ..WarpedGrid::default()
    }
}

#[test]
fn fitted_map_is_one_at_reference_and_inside_range() {
    let scenario = small_scenario();
    let data = simulate_field(&scenario.spec()).unwrap();
    let stations = scenario.stations();
    let theta_hat = extremal_matrix(&data).unwrap();
    let inputs = FitInputs {
        data: &data,
        theta_hat: &theta_hat,
        stations: &stations,
    };
    let grid = GridSpec {
        sigma_grid: vec![2.0],
        alpha_grid: vec![1.0, 1.5],
        ..GridSpec::reduced()
    };
    let model = fit_mds_model(Method::Method1, &inputs, &grid, 3, &SweepOptions::default()).unwrap();
    let reference = stations.coords[7];
    let map_grid = MapGrid {
        elevation_raster: stations.coords.clone(),
        ..MapGrid::new((0.0, 40.0), (0.0, 30.0), 5.0).unwrap()
    };
    let map = export_theta_map(&model, &Reference::Station(stations.ids[7].clone()), &map_grid).unwrap();
    assert_eq!(map.len(), 9 * 7);
    for p in &map {
        assert!(p.theta >= 1.0 && p.theta < 2.0, "{p:?}");
        if [p.easting, p.northing, p.elevation] == reference {
            assert_eq!(p.theta, 1.0);
        }
    }
    // grid points on stations reproduce the model's station-pair θ
    let theta = model.theta_matrix();
    for (j, x) in stations.coords.iter().enumerate() {
        let p = map.iter().find(|p| [p.easting, p.northing, p.elevation] == *x).unwrap();
        assert!((p.theta - theta[(7, j)]).abs() < 1e-6);
    }
}

#[test]
fn unknown_reference_station_is_rejected() {
    let stations = small_scenario().stations();
    let theta = ExtremalMatrix {
        theta: DMatrix::from_element(20, 20, 1.0),
        station_ids: stations.ids.clone(),
    };
    let grid = MapGrid::new((0.0, 10.0), (0.0, 10.0), 5.0).unwrap();
    assert!(export_observed_theta_map(&theta, &stations, "nowhere", &grid).is_err());
}

fn classical_model() -> FittedModel {
    let stations = StationSet::new(
        vec!["A".into(), "B".into(), "C".into()],
        vec![[0.0, 0.0, 500.0], [30.0, 5.0, 800.0], [10.0, 40.0, 300.0]],
    )
    .unwrap();
    FittedModel {
        method: Method::Classical,
        sigma: 2.0,
        cov: CovFunction::PowerExponential { alpha: 1.2 },
        d: 3,
        space: ModelSpace::Climate {
            transform: ClimateTransform {
                beta: 0.4,
                c1: 0.08,
                c2: 0.03,
                c3: 1e-3,
            },
            stations,
        },
        log_likelihood: 0.0,
        theta_mse: 0.0,
    }
}

/// Points where θ crosses `level` along grid edges, by linear interpolation.
fn contour(map: &[MapPoint], ne: usize, level: f64) -> Vec<[f64; 2]> {
    let nn = map.len() / ne;
    let at = |r: usize, c: usize| &map[r * ne + c];
    let mut pts = Vec::new();
    let mut cross = |a: &MapPoint, b: &MapPoint| {
        let (fa, fb) = (a.theta - level, b.theta - level);
        if fa * fb < 0.0 {
            let t = fa / (fa - fb);
            pts.push([a.easting + t * (b.easting - a.easting), a.northing + t * (b.northing - a.northing)]);
        }
    };
    for r in 0..nn {
        for c in 0..ne {
            if c + 1 < ne {
                cross(at(r, c), at(r, c + 1));
            }
            if r + 1 < nn {
                cross(at(r, c), at(r + 1, c));
            }
        }
    }
    pts
}

#[test]
fn classical_level_sets_are_ellipses() {
    let model = classical_model();
    let grid = MapGrid::new((-60.0, 60.0), (-60.0, 60.0), 0.5).unwrap();
    let map = export_theta_map(&model, &Reference::Location([0.0, 0.0, 500.0]), &grid).unwrap();
    let ne = 241;
    assert_eq!(map.len(), ne * ne);
    let pts = contour(&map, ne, 1.5);
    assert!(pts.len() > 100);

    // least-squares conic a x² + b xy + c y² = 1 about the reference point
    let a = DMatrix::from_fn(pts.len(), 3, |i, k| {
        let [x, y] = pts[i];
        [x * x, x * y, y * y][k]
    });
    let ones = DVector::from_element(pts.len(), 1.0);
    let coef = (a.transpose() * &a).lu().solve(&(a.transpose() * ones)).unwrap();
    let (ca, cb, cc) = (coef[0], coef[1], coef[2]);
    assert!(4.0 * ca * cc - cb * cb > 0.0, "conic must be an ellipse");

    let q = nalgebra::Matrix2::new(ca, cb / 2.0, cb / 2.0, cc);
    let eig = q.symmetric_eigenvalues();
    let major = 1.0 / eig.min().sqrt();
    let worst = pts
        .iter()
        .map(|&[x, y]| {
            let r = (x * x + y * y).sqrt();
            let (u, v) = (x / r, y / r);
            let r_fit = 1.0 / (ca * u * u + cb * u * v + cc * v * v).sqrt();
            (r - r_fit).abs()
        })
        .fold(0.0, f64::max);
    assert!(worst < 0.01 * major, "residual {worst} vs major axis {major}");
}

#[test]
fn observed_map_interpolates_estimates() {
    let scenario = small_scenario();
    let data = simulate_field(&scenario.spec()).unwrap();
    let stations = scenario.stations();
    let theta_hat = extremal_matrix(&data).unwrap();
    let grid = MapGrid {
        elevation_raster: stations.coords.clone(),
        ..MapGrid::new((0.0, 40.0), (0.0, 30.0), 10.0).unwrap()
    };
    let reference = 6;
    let map = export_observed_theta_map(&theta_hat, &stations, &stations.ids[reference], &grid).unwrap();
    assert_eq!(map.len(), 20);
    for (j, x) in stations.coords.iter().enumerate() {
        let p = map.iter().find(|p| [p.easting, p.northing, p.elevation] == *x).unwrap();
        assert!((p.theta - theta_hat.theta[(reference, j)]).abs() < 1e-4, "station {j}");
        if j == reference {
            assert!((p.theta - 1.0).abs() < 1e-4);
        }
    }
}

#[test]
fn constant_observed_row_gives_constant_map() {
    let stations = small_scenario().stations();
    let theta = ExtremalMatrix {
        theta: DMatrix::from_element(20, 20, 1.0),
        station_ids: stations.ids.clone(),
    };
    let grid = MapGrid::new((-5.0, 45.0), (-5.0, 35.0), 2.5).unwrap();
    let map = export_observed_theta_map(&theta, &stations, "S03", &grid).unwrap();
    assert!(map.iter().all(|p| p.theta == map[0].theta));
    assert!((map[0].theta - 1.0).abs() < 1e-12);
}
