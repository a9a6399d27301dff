use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use latent_extremes::gev::{sample_gev, GevParams};
use latent_extremes::io::{read_frechet, read_model, read_theta, write_frechet, write_maxima, write_stations};
use latent_extremes::simulator::{simulate_field, WarpedGrid};
use latent_extremes::{MaximaMatrix, StationSet};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latent-extremes"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_fixture(dir: &Path) {
    let scenario = WarpedGrid {
        nx: 4,
        ny: 3,
        p: 80,
        ..WarpedGrid::default()
    };
    write_stations(&dir.join("stations.csv"), &scenario.stations()).unwrap();
    write_frechet(&dir.join("frechet.csv"), &simulate_field(&scenario.spec()).unwrap()).unwrap();
}

#[test]
fn unknown_config_key_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# comment\nfrechet = x.csv\nbogus = 1\n").unwrap();
    let out = run(&["estimate-theta", "--config", s(&cfg)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn missing_input_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["estimate-theta", "--frechet", s(&dir.path().join("absent.csv"))]);
    assert_eq!(code(&out), 1);
}

#[test]
fn margins_then_theta() {
    let dir = tempfile::tempdir().unwrap();
    let n = 5;
    let ids: Vec<String> = (0..n).map(|i| format!("M{i}")).collect();
    let stations = StationSet::new(ids.clone(), (0..n).map(|i| [i as f64 * 5.0, 0.0, 400.0]).collect()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = GevParams::new(20.0, 4.0, 0.05).unwrap();
    let mut values = DMatrix::zeros(30, n);
    for i in 0..n {
        for (t, v) in sample_gev(&g, 30, &mut rng).into_iter().enumerate() {
            values[(t, i)] = v;
        }
    }
    let maxima = MaximaMatrix::new(values, ids, (0..30).map(|y| (1990 + y).to_string()).collect()).unwrap();
    write_stations(&dir.path().join("stations.csv"), &stations).unwrap();
    write_maxima(&dir.path().join("maxima.csv"), &maxima).unwrap();
    let out_dir = dir.path().join("out");

    let out = run(&[
        "fit-margins",
        "--stations",
        s(&dir.path().join("stations.csv")),
        "--maxima",
        s(&dir.path().join("maxima.csv")),
        "-o",
        s(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let z = read_frechet(&out_dir.join("frechet.csv")).unwrap();
    assert_eq!((z.n_years(), z.n_stations()), (30, 5));

    let out = run(&["estimate-theta", "--frechet", s(&out_dir.join("frechet.csv")), "-o", s(&out_dir)]);
    assert_eq!(code(&out), 0);
    let theta = read_theta(&out_dir.join("theta.csv")).unwrap();
    assert!(theta.theta.iter().all(|t| (1.0..=2.0).contains(t)));
}

#[test]
fn mds_fit_and_map_from_config_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    let out_dir = dir.path().join("fit");
    let cfg = dir.path().join("fit.cfg");
    fs::write(
        &cfg,
        format!(
            "command = fit-mds\nstations = {}\nfrechet = {}\nmethod = 2\nsigma_grid = 1.5,2.5\nalpha_grid = 0.5:0.5:2\nd_set = 2,3\nd = 3\n",
            s(&dir.path().join("stations.csv")),
            s(&dir.path().join("frechet.csv"))
        ),
    )
    .unwrap();
    let out = run(&["fit-mds", "--config", s(&cfg), "--method", "1", "-o", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let model = read_model(&out_dir.join("model.json")).unwrap();
    assert_eq!(model.d, 3);
    assert_eq!(model.method.to_string(), "method1");
    let grid_rows = fs::read_to_string(out_dir.join("grid.csv")).unwrap().lines().count();
    assert_eq!(grid_rows, 1 + 2 * 4 * 2);

    // the config names its command; using it for another one is refused
    let out = run(&["fit-classical", "--config", s(&cfg)]);
    assert_eq!(code(&out), 1);

    let out = run(&[
        "theta-map",
        "--model",
        s(&out_dir.join("model.json")),
        "--reference",
        "S05",
        "--resolution",
        "5",
        "-o",
        s(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let map = fs::read_to_string(out_dir.join("theta_map.csv")).unwrap();
    let mut lines = map.lines();
    assert_eq!(lines.next(), Some("easting,northing,elevation,theta"));
    let thetas: Vec<f64> = lines.map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(thetas.len(), 7 * 5);
    assert!(thetas.iter().all(|t| (1.0..2.0).contains(t)));
}

#[test]
fn coincident_stations_are_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    // move S01 onto S00
    let st = fs::read_to_string(dir.path().join("stations.csv")).unwrap();
    let lines: Vec<String> = st.lines().map(String::from).collect();
    let s00: Vec<&str> = lines[1].split(',').collect();
    let mut out_lines = lines.clone();
    out_lines[2] = format!("S01,{},{},{}", s00[1], s00[2], s00[3]);
    fs::write(dir.path().join("stations.csv"), out_lines.join("\n") + "\n").unwrap();
    let out = run(&[
        "fit-mds",
        "--stations",
        s(&dir.path().join("stations.csv")),
        "--frechet",
        s(&dir.path().join("frechet.csv")),
        "--method",
        "1",
        "--sigma-grid",
        "2",
        "--alpha-grid",
        "1",
        "--d-set",
        "2",
        "-o",
        s(&dir.path().join("out")),
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let stations = StationSet::new(
        vec!["a".into(), "b".into(), "c".into()],
        vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0]],
    )
    .unwrap();
    write_stations(&dir.path().join("st.csv"), &stations).unwrap();
    let mut outputs = Vec::new();
    for tag in ["x", "y"] {
        let o = dir.path().join(tag);
        let out = run(&[
            "simulate",
            "--layout",
            "stations",
            "--stations",
            s(&dir.path().join("st.csv")),
            "--sigma",
            "1.2",
            "--p",
            "40",
            "--seed",
            "9",
            "-o",
            s(&o),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(fs::read(o.join("frechet.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let bad = run(&["simulate", "--layout", "nowhere"]);
    assert_eq!(code(&bad), 1);
}
