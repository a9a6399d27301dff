use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use latent_extremes::covariance::CovFunction;
use latent_extremes::gev::{fit_margins, to_frechet, MarginOptions};
use latent_extremes::io::{self, MapGrid, Reference, RunConfig};
use latent_extremes::madogram::extremal_matrix;
use latent_extremes::pipeline::{
    fit_classical, fit_mds_sweep, holdout_experiment, select_dimension, ClassicalOptions, FitInputs, GridSpec,
    HoldoutOptions, Method, SweepOptions,
};
use latent_extremes::simulator::{simulate_field, true_theta_matrix, SimSpec, WarpedGrid, DEFAULT_TRUNCATION};
use latent_extremes::{Error, Result, StationSet};

#[derive(Parser)]
#[command(name = "latent-extremes", version, about = "Brown-Resnick models fitted in an MDS latent space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit GEV margins and write unit-Fréchet data.
    FitMargins(Opts),
    /// F-madogram extremal coefficients for every station pair.
    EstimateTheta(Opts),
    /// Method 1 or 2 over the (d, σ, α) grid.
    FitMds(Opts),
    /// Stationary model in the rotated, anisotropic climate space.
    FitClassical(Opts),
    /// Simulate a Brown-Resnick field.
    Simulate(Opts),
    /// Fit on training stations and score the held-out ones.
    Holdout(Opts),
    /// Grid of θ between a reference and every grid point.
    ThetaMap(Opts),
}

/// Every flag mirrors a config key; flags override the `--config` file.
#[derive(Args, Debug, Default)]
struct Opts {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    stations: Option<String>,
    #[arg(long)]
    maxima: Option<String>,
    #[arg(long)]
    frechet: Option<String>,
    #[arg(long)]
    gev: Option<String>,
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    elevation_raster: Option<String>,
    #[arg(long, short = 'o')]
    output_dir: Option<String>,
    /// 1, 2 or classical
    #[arg(long)]
    method: Option<String>,
    /// Comma list or lo:step:hi
    #[arg(long)]
    sigma_grid: Option<String>,
    #[arg(long)]
    alpha_grid: Option<String>,
    #[arg(long)]
    d_set: Option<String>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    r1: Option<String>,
    #[arg(long)]
    r2: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    reference: Option<String>,
    /// Map resolution in km
    #[arg(long)]
    resolution: Option<String>,
    /// east_min,east_max,north_min,north_max
    #[arg(long)]
    bbox: Option<String>,
    #[arg(long)]
    n2_min: Option<String>,
    #[arg(long)]
    n2_max: Option<String>,
    #[arg(long)]
    cache_dir: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    /// powexp, matern32 or matern52
    #[arg(long)]
    cov: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    truncation: Option<String>,
    /// warped (built-in non-stationary grid) or stations
    #[arg(long)]
    layout: Option<String>,
    #[arg(long)]
    threads: Option<String>,
}

impl Opts {
    fn into_config(self, command: &str) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let flags = [
            ("stations", self.stations),
            ("maxima", self.maxima),
            ("frechet", self.frechet),
            ("gev", self.gev),
            ("theta", self.theta),
            ("model", self.model),
            ("elevation_raster", self.elevation_raster),
            ("output_dir", self.output_dir),
            ("method", self.method),
            ("sigma_grid", self.sigma_grid),
            ("alpha_grid", self.alpha_grid),
            ("d_set", self.d_set),
            ("d", self.d),
            ("r1", self.r1),
            ("r2", self.r2),
            ("epsilon", self.epsilon),
            ("seed", self.seed),
            ("reference", self.reference),
            ("resolution", self.resolution),
            ("bbox", self.bbox),
            ("n2_min", self.n2_min),
            ("n2_max", self.n2_max),
            ("cache_dir", self.cache_dir),
            ("sigma", self.sigma),
            ("alpha", self.alpha),
            ("cov", self.cov),
            ("p", self.p),
            ("truncation", self.truncation),
            ("layout", self.layout),
            ("threads", self.threads),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, v)?;
            }
        }
        if let Some(c) = cfg.get("command") {
            if c != command {
                return Err(Error::Config(format!("config is for '{c}', not '{command}'")));
            }
        }
        Ok(cfg)
    }
}

fn path_of(cfg: &RunConfig, key: &str) -> Result<PathBuf> {
    let p = PathBuf::from(cfg.require(key)?);
    if !p.exists() {
        return Err(Error::Config(format!("{key}: '{}' does not exist", p.display())));
    }
    Ok(p)
}

fn output_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(cfg.get("output_dir").unwrap_or("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn grid_spec(cfg: &RunConfig) -> Result<GridSpec> {
    let mut g = GridSpec::default();
    if let Some(v) = cfg.list_f64("sigma_grid")? {
        g.sigma_grid = v;
    }
    if let Some(v) = cfg.list_f64("alpha_grid")? {
        g.alpha_grid = v;
    }
    if let Some(v) = cfg.list_f64("d_set")? {
        if v.iter().any(|d| d.fract() != 0.0 || *d < 1.0) {
            return Err(Error::Config("d_set must hold positive integers".into()));
        }
        g.d_set = v.into_iter().map(|d| d as usize).collect();
    }
    if let Some(v) = cfg.parsed("r1")? {
        g.r1 = v;
    }
    if let Some(v) = cfg.parsed("r2")? {
        g.r2 = v;
    }
    if let Some(v) = cfg.parsed("epsilon")? {
        g.epsilon = v;
    }
    g.validate()?;
    Ok(g)
}

fn sweep_options(cfg: &RunConfig) -> SweepOptions {
    SweepOptions {
        cache_dir: cfg.get("cache_dir").map(PathBuf::from),
        ..SweepOptions::default()
    }
}

fn cov_function(cfg: &RunConfig) -> Result<CovFunction> {
    match cfg.get("cov").unwrap_or("powexp") {
        "powexp" => CovFunction::power_exponential(cfg.parsed("alpha")?.unwrap_or(1.0)),
        "matern32" => Ok(CovFunction::Matern32),
        "matern52" => Ok(CovFunction::Matern52),
        other => Err(Error::Config(format!("unknown covariance '{other}'"))),
    }
}

/// Stations plus Fréchet data, aligned on the data's column order.
fn load_inputs(cfg: &RunConfig) -> Result<(StationSet, latent_extremes::FrechetMatrix)> {
    let stations = io::ingest_stations(&path_of(cfg, "stations")?)?;
    let data = io::read_frechet(&path_of(cfg, "frechet")?)?;
    let stations = io::align_stations(&stations, &data.station_ids)?;
    Ok((stations, data))
}

fn fit_margins_cmd(cfg: &RunConfig) -> Result<()> {
    let (stations, maxima) = io::ingest(&path_of(cfg, "stations")?, &path_of(cfg, "maxima")?)?;
    let fits = fit_margins(&maxima, &stations, None, &MarginOptions::default())?;
    let params: Vec<_> = fits.iter().map(|f| f.params).collect();
    let frechet = to_frechet(&maxima, &params)?;
    let out = output_dir(cfg)?;
    io::write_gev_params(&out.join("gev.csv"), &fits)?;
    io::write_frechet(&out.join("frechet.csv"), &frechet)?;
    println!("fitted {} stations over {} years", stations.len(), maxima.n_years());
    Ok(())
}

fn estimate_theta_cmd(cfg: &RunConfig) -> Result<()> {
    let data = io::read_frechet(&path_of(cfg, "frechet")?)?;
    let theta = extremal_matrix(&data)?;
    io::write_theta(&output_dir(cfg)?.join("theta.csv"), &theta)?;
    println!("estimated {} pairs", data.n_stations() * (data.n_stations() - 1) / 2);
    Ok(())
}

fn fit_mds_cmd(cfg: &RunConfig) -> Result<()> {
    let method: Method = cfg.parsed("method")?.unwrap_or(Method::Method2);
    let grid = grid_spec(cfg)?;
    let (stations, data) = load_inputs(cfg)?;
    let theta_hat = extremal_matrix(&data)?;
    let inputs = FitInputs {
        data: &data,
        theta_hat: &theta_hat,
        stations: &stations,
    };
    let sweep = fit_mds_sweep(method, &inputs, &grid, &sweep_options(cfg))?;
    let d = match cfg.parsed::<usize>("d")? {
        Some(d) => d,
        None => select_dimension(&sweep.per_d, &grid, method)?,
    };
    let model = sweep.per_d.get(&d).ok_or(Error::MissingDimension(d))?;
    let out = output_dir(cfg)?;
    io::write_records(&out.join("grid.csv"), &sweep.records)?;
    fs::write(out.join("alpha_map.json"), serde_json::to_string_pretty(&sweep.alpha_map)?)?;
    for (dd, m) in &sweep.per_d {
        io::write_model(&out.join(format!("model_d{dd}.json")), m)?;
    }
    io::write_model(&out.join("model.json"), model)?;
    println!(
        "{method}: d = {d}, sigma = {}, cov = {:?}, loglik = {:.3}, theta_mse = {:.6}",
        model.sigma, model.cov, model.log_likelihood, model.theta_mse
    );
    Ok(())
}

fn fit_classical_cmd(cfg: &RunConfig) -> Result<()> {
    let (stations, data) = load_inputs(cfg)?;
    let fit = fit_classical(&data, &stations, &ClassicalOptions::default())?;
    let out = output_dir(cfg)?;
    io::write_model(&out.join("model.json"), &fit.model)?;
    let trace: String = fit.trace.iter().map(|v| format!("{v}\n")).collect();
    fs::write(out.join("trace.csv"), format!("log_likelihood\n{trace}"))?;
    if !fit.converged {
        eprintln!("warning: cycle limit reached before convergence");
    }
    println!(
        "classical: sigma = {}, cov = {:?}, loglik = {:.3}, theta_mse = {:.6}",
        fit.model.sigma, fit.model.cov, fit.model.log_likelihood, fit.model.theta_mse
    );
    Ok(())
}

fn simulate_cmd(cfg: &RunConfig) -> Result<()> {
    let seed = cfg.parsed("seed")?.unwrap_or(2024);
    let truncation = cfg.parsed("truncation")?.unwrap_or(DEFAULT_TRUNCATION);
    let (stations, spec) = match cfg.get("layout").unwrap_or("warped") {
        "warped" => {
            let mut w = WarpedGrid {
                seed,
                ..WarpedGrid::default()
            };
            if let Some(s) = cfg.parsed("sigma")? {
                w.sigma = s;
            }
            if let Some(p) = cfg.parsed("p")? {
                w.p = p;
            }
            if cfg.get("cov").is_some() || cfg.get("alpha").is_some() {
                w.cov = cov_function(cfg)?;
            }
            (w.stations(), w.spec())
        }
        "stations" => {
            let st = io::ingest_stations(&path_of(cfg, "stations")?)?;
            let points = DMatrix::from_fn(st.len(), 3, |i, c| st.coords[i][c]);
            let mut spec = SimSpec::new(
                points,
                cfg.parsed("sigma")?.unwrap_or(2.0),
                cov_function(cfg)?,
                cfg.parsed("p")?.unwrap_or(200),
                seed,
            );
            spec.station_ids = st.ids.clone();
            (st, spec)
        }
        other => return Err(Error::Config(format!("unknown layout '{other}'"))),
    };
    let spec = SimSpec { truncation, ..spec };
    let data = simulate_field(&spec)?;
    let truth = true_theta_matrix(&spec);
    let out = output_dir(cfg)?;
    io::write_stations(&out.join("stations.csv"), &stations)?;
    io::write_frechet(&out.join("frechet.csv"), &data)?;
    io::write_square_matrix(&out.join("theta_true.csv"), &spec.station_ids, &truth)?;
    println!("simulated {} stations x {} replicates", spec.n(), spec.p);
    Ok(())
}

fn holdout_cmd(cfg: &RunConfig) -> Result<()> {
    let method: Method = cfg.parsed("method")?.unwrap_or(Method::Method2);
    let grid = grid_spec(cfg)?;
    let d = cfg.parsed("d")?.unwrap_or(grid.d_set[0]);
    let (stations, data) = load_inputs(cfg)?;
    let theta_hat = extremal_matrix(&data)?;
    let sweep_opts = sweep_options(cfg);
    // α per (d, σ) comes from a sweep over all stations, as in the full fit
    let full = fit_mds_sweep(
        method,
        &FitInputs {
            data: &data,
            theta_hat: &theta_hat,
            stations: &stations,
        },
        &GridSpec {
            d_set: vec![d],
            ..grid.clone()
        },
        &sweep_opts,
    )?;
    let opts = HoldoutOptions {
        method,
        d,
        n2_range: (cfg.parsed("n2_min")?.unwrap_or(25), cfg.parsed("n2_max")?.unwrap_or(50)),
        seed: cfg.parsed("seed")?.unwrap_or(0),
        sweep: SweepOptions {
            cache_dir: None,
            ..sweep_opts
        },
    };
    let res = holdout_experiment(&data, &stations, &full.alpha_map, &grid, &opts)?;
    let out = output_dir(cfg)?;
    io::write_model(&out.join("holdout_model.json"), &res.model)?;
    let test_ids: Vec<&str> = res.split.test.iter().map(|&i| stations.ids[i].as_str()).collect();
    fs::write(
        out.join("holdout.csv"),
        format!(
            "n2,log_likelihood,theta_mse,train_pair_mse,test_pair_mse,mixed_pair_mse,test_stations\n{},{},{},{},{},{},{}\n",
            res.split.n2,
            res.log_likelihood,
            res.theta_mse,
            res.train_pair_mse,
            res.test_pair_mse,
            res.mixed_pair_mse,
            test_ids.join(" ")
        ),
    )?;
    println!(
        "{method} d = {d}: held out {} stations, loglik = {:.3}, theta_mse = {:.6}, test/train pair mse = {:.6}/{:.6}",
        res.split.n2, res.log_likelihood, res.theta_mse, res.test_pair_mse, res.train_pair_mse
    );
    Ok(())
}

fn map_grid(cfg: &RunConfig, stations: &StationSet) -> Result<MapGrid> {
    let resolution = cfg.parsed("resolution")?.unwrap_or(1.0);
    let (east, north) = match cfg.list_f64("bbox")? {
        Some(b) if b.len() == 4 => ((b[0], b[1]), (b[2], b[3])),
        Some(_) => return Err(Error::Config("bbox needs four values".into())),
        None => {
            let ext = |c: usize| {
                stations
                    .coords
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x[c]), hi.max(x[c])))
            };
            (ext(0), ext(1))
        }
    };
    let mut grid = MapGrid::new(east, north, resolution)?;
    if cfg.get("elevation_raster").is_some() {
        grid.elevation_raster = io::read_elevation_raster(&path_of(cfg, "elevation_raster")?)?;
    }
    Ok(grid)
}

fn parse_reference(s: &str) -> Reference {
    let parts: Vec<f64> = s.split(',').filter_map(|v| v.trim().parse().ok()).collect();
    match parts[..] {
        [e, n, z] if s.split(',').count() == 3 => Reference::Location([e, n, z]),
        _ => Reference::Station(s.to_string()),
    }
}

fn theta_map_cmd(cfg: &RunConfig) -> Result<()> {
    let reference = cfg.require("reference")?;
    let points = if cfg.get("model").is_some() {
        let model = io::read_model(&path_of(cfg, "model")?)?;
        let grid = map_grid(cfg, model.stations())?;
        io::export_theta_map(&model, &parse_reference(reference), &grid)?
    } else {
        let theta = io::read_theta(&path_of(cfg, "theta")?)?;
        let stations = io::ingest_stations(&path_of(cfg, "stations")?)?;
        let grid = map_grid(cfg, &stations)?;
        io::export_observed_theta_map(&theta, &stations, reference, &grid)?
    };
    let out = output_dir(cfg)?;
    io::write_map(&out.join("theta_map.csv"), &points)?;
    println!("wrote {} grid points", points.len());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let (name, opts, f): (&str, Opts, fn(&RunConfig) -> Result<()>) = match cli.command {
        Command::FitMargins(o) => ("fit-margins", o, fit_margins_cmd),
        Command::EstimateTheta(o) => ("estimate-theta", o, estimate_theta_cmd),
        Command::FitMds(o) => ("fit-mds", o, fit_mds_cmd),
        Command::FitClassical(o) => ("fit-classical", o, fit_classical_cmd),
        Command::Simulate(o) => ("simulate", o, simulate_cmd),
        Command::Holdout(o) => ("holdout", o, holdout_cmd),
        Command::ThetaMap(o) => ("theta-map", o, theta_map_cmd),
    };
    let cfg = opts.into_config(name)?;
    if let Some(t) = cfg.parsed::<usize>("threads")? {
        // a second initialisation only fails if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    f(&cfg)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
