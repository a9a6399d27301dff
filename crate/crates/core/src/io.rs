//! CSV and JSON formats, run configuration, the K² cache and θ-map export.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FrechetMatrix, MaximaMatrix, StationSet};
use crate::error::{Error, Result};
use crate::gev::{GevParams, MarginFit};
use crate::ideal_covariance::{ideal_cov_method2, IdealCovMatrix, IdealMethod};
use crate::latent_warp::KrigingModel;
use crate::madogram::ExtremalMatrix;
use crate::mds::Embedding;
use crate::pipeline::{FittedModel, GridRecord};

/// Elevation assumed at map grid points when no raster is given.
pub const DEFAULT_MAP_ELEVATION: f64 = 500.0;

fn parse_err(path: &Path, line: u64, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        column,
        message: message.into(),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?)
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

fn parse_f64(path: &Path, rec: &csv::StringRecord, col: usize) -> Result<f64> {
    let raw = rec.get(col).unwrap_or("");
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| parse_err(path, record_line(rec), col + 1, format!("expected a number, found '{raw}'")))
}

fn expect_header(path: &Path, rdr: &mut csv::Reader<fs::File>, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers()?.clone();
    let got: Vec<&str> = headers.iter().collect();
    if got.len() < expected.len() || got[..expected.len()] != *expected {
        return Err(parse_err(
            path,
            1,
            1,
            format!("expected header '{}', found '{}'", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

/// `station_id,easting,northing,elevation`
pub fn ingest_stations(path: &Path) -> Result<StationSet> {
    let mut rdr = reader(path)?;
    expect_header(path, &mut rdr, &["station_id", "easting", "northing", "elevation"])?;
    let mut ids = Vec::new();
    let mut coords = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(parse_err(path, record_line(&rec), 1, "empty station id"));
        }
        ids.push(id);
        coords.push([parse_f64(path, &rec, 1)?, parse_f64(path, &rec, 2)?, parse_f64(path, &rec, 3)?]);
    }
    StationSet::new(ids, coords)
}

/// A `year,<id_1>,...,<id_n>` table; empty cells raise `MissingData`.
fn read_year_table(path: &Path) -> Result<(DMatrix<f64>, Vec<String>, Vec<String>)> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("year") {
        return Err(parse_err(path, 1, 1, "first column must be 'year'"));
    }
    let ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    if ids.is_empty() {
        return Err(parse_err(path, 1, 2, "no station columns"));
    }
    let mut seen = HashSet::new();
    for (c, id) in ids.iter().enumerate() {
        if !seen.insert(id) {
            return Err(parse_err(path, 1, c + 2, format!("duplicate station '{id}'")));
        }
    }
    let mut years = Vec::new();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let year = rec.get(0).unwrap_or("").to_string();
        let mut row = Vec::with_capacity(ids.len());
        for (c, id) in ids.iter().enumerate() {
            if rec.get(c + 1).is_none_or(str::is_empty) {
                return Err(Error::MissingData {
                    station: id.clone(),
                    year,
                });
            }
            row.push(parse_f64(path, &rec, c + 1)?);
        }
        years.push(year);
        rows.push(row);
    }
    let values = DMatrix::from_fn(rows.len(), ids.len(), |k, i| rows[k][i]);
    Ok((values, ids, years))
}

pub fn ingest_maxima(path: &Path) -> Result<MaximaMatrix> {
    let (values, ids, years) = read_year_table(path)?;
    MaximaMatrix::new(values, ids, years)
}

pub fn read_frechet(path: &Path) -> Result<FrechetMatrix> {
    let (values, ids, years) = read_year_table(path)?;
    FrechetMatrix::new(values, ids, years)
}

/// Reorders `stations` to the column order of `ids`; the two id sets must agree.
pub fn align_stations(stations: &StationSet, ids: &[String]) -> Result<StationSet> {
    let have: HashSet<&str> = stations.ids.iter().map(String::as_str).collect();
    let want: HashSet<&str> = ids.iter().map(String::as_str).collect();
    let mut missing: Vec<String> = ids.iter().filter(|i| !have.contains(i.as_str())).cloned().collect();
    let mut extra: Vec<String> = stations.ids.iter().filter(|i| !want.contains(i.as_str())).cloned().collect();
    if !missing.is_empty() || !extra.is_empty() {
        missing.sort();
        extra.sort();
        return Err(Error::SchemaMismatch { missing, extra });
    }
    let idx: Vec<usize> = ids.iter().map(|i| stations.index_of(i).unwrap()).collect();
    Ok(stations.subset(&idx))
}

/// Stations and maxima read together, stations in maxima column order.
pub fn ingest(stations_path: &Path, maxima_path: &Path) -> Result<(StationSet, MaximaMatrix)> {
    let stations = ingest_stations(stations_path)?;
    let maxima = ingest_maxima(maxima_path)?;
    let aligned = align_stations(&stations, &maxima.station_ids)?;
    Ok((aligned, maxima))
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(csv::Writer::from_path(path)?)
}

fn write_year_table(path: &Path, values: &DMatrix<f64>, ids: &[String], years: &[String]) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["year".to_string()];
    header.extend(ids.iter().cloned());
    w.write_record(&header)?;
    for (k, year) in years.iter().enumerate() {
        let mut row = vec![year.clone()];
        row.extend((0..ids.len()).map(|i| values[(k, i)].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_maxima(path: &Path, m: &MaximaMatrix) -> Result<()> {
    write_year_table(path, &m.values, &m.station_ids, &m.years)
}

pub fn write_frechet(path: &Path, m: &FrechetMatrix) -> Result<()> {
    write_year_table(path, &m.values, &m.station_ids, &m.years)
}

pub fn write_stations(path: &Path, s: &StationSet) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["station_id", "easting", "northing", "elevation"])?;
    for (id, c) in s.ids.iter().zip(&s.coords) {
        w.write_record([id.clone(), c[0].to_string(), c[1].to_string(), c[2].to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `station_id,mu,sigma,xi,J`
pub fn write_gev_params(path: &Path, fits: &[MarginFit]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["station_id", "mu", "sigma", "xi", "J"])?;
    for f in fits {
        w.write_record([
            f.station_id.clone(),
            f.params.mu.to_string(),
            f.params.sigma.to_string(),
            f.params.xi.to_string(),
            f.neighbors.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_gev_params(path: &Path) -> Result<Vec<MarginFit>> {
    let mut rdr = reader(path)?;
    expect_header(path, &mut rdr, &["station_id", "mu", "sigma", "xi", "J"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = record_line(&rec);
        let params = GevParams::new(parse_f64(path, &rec, 1)?, parse_f64(path, &rec, 2)?, parse_f64(path, &rec, 3)?)
            .map_err(|e| parse_err(path, line, 3, e.to_string()))?;
        let j = rec
            .get(4)
            .unwrap_or("")
            .parse::<usize>()
            .map_err(|_| parse_err(path, line, 5, "expected a neighbour count"))?;
        out.push(MarginFit {
            station_id: rec.get(0).unwrap_or("").to_string(),
            params,
            neighbors: j,
        });
    }
    Ok(out)
}

/// Square matrix with a `station_id,<id_1>,...` header and one row per station.
pub fn write_square_matrix(path: &Path, ids: &[String], m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != ids.len() || m.ncols() != ids.len() {
        return Err(Error::DimensionMismatch {
            expected: ids.len(),
            got: m.nrows(),
        });
    }
    let mut w = writer(path)?;
    let mut header = vec!["station_id".to_string()];
    header.extend(ids.iter().cloned());
    w.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend((0..ids.len()).map(|j| m[(i, j)].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_square_matrix(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("station_id") {
        return Err(parse_err(path, 1, 1, "first column must be 'station_id'"));
    }
    let ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let n = ids.len();
    let mut m = DMatrix::zeros(n, n);
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        if rows >= n {
            return Err(parse_err(path, record_line(&rec), 1, "more rows than columns"));
        }
        if rec.get(0) != Some(ids[rows].as_str()) {
            return Err(parse_err(path, record_line(&rec), 1, format!("expected row '{}'", ids[rows])));
        }
        for j in 0..n {
            m[(rows, j)] = parse_f64(path, &rec, j + 1)?;
        }
        rows += 1;
    }
    if rows != n {
        return Err(parse_err(path, rows as u64 + 1, 1, format!("expected {n} rows, found {rows}")));
    }
    Ok((ids, m))
}

pub fn write_theta(path: &Path, t: &ExtremalMatrix) -> Result<()> {
    write_square_matrix(path, &t.station_ids, &t.theta)
}

pub fn read_theta(path: &Path) -> Result<ExtremalMatrix> {
    let (station_ids, theta) = read_square_matrix(path)?;
    Ok(ExtremalMatrix { theta, station_ids })
}

/// `station_id,y1,...,yd`
pub fn write_embedding(path: &Path, ids: &[String], e: &Embedding) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["station_id".to_string()];
    header.extend((1..=e.dim()).map(|c| format!("y{c}")));
    w.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend((0..e.dim()).map(|c| e.coords[(i, c)].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_embedding(path: &Path) -> Result<(Vec<String>, Embedding)> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let d = headers.len().saturating_sub(1);
    if headers.get(0) != Some("station_id") || d == 0 {
        return Err(parse_err(path, 1, 1, "expected header 'station_id,y1,...'"));
    }
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        ids.push(rec.get(0).unwrap_or("").to_string());
        rows.push((0..d).map(|c| parse_f64(path, &rec, c + 1)).collect::<Result<Vec<f64>>>()?);
    }
    let coords = DMatrix::from_fn(rows.len(), d, |i, c| rows[i][c]);
    Ok((ids, Embedding::new(coords)?))
}

/// One row per evaluated (method, d, σ, α) cell.
pub fn write_records(path: &Path, records: &[GridRecord]) -> Result<()> {
    let mut w = writer(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_model(path: &Path, model: &FittedModel) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(model)?)?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<FittedModel> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Cache file for the K² matrix at `sigma`, e.g. `K2_sigma2.8.csv`.
pub fn k2_cache_path(dir: &Path, sigma: f64) -> PathBuf {
    let tenth = (sigma * 10.0).round() / 10.0;
    let label = if (tenth - sigma).abs() < 1e-12 {
        format!("{tenth:.1}")
    } else {
        format!("{sigma}")
    };
    dir.join(format!("{}_sigma{label}.csv", IdealMethod::PairLikelihood.tag()))
}

/// Reads K² for `sigma` from the cache, or builds and stores it. A cached
/// matrix for different stations or a larger floor is rebuilt.
pub fn load_or_build_k2(dir: &Path, data: &FrechetMatrix, sigma: f64, epsilon: f64) -> Result<IdealCovMatrix> {
    let path = k2_cache_path(dir, sigma);
    if path.exists() {
        let (ids, k) = read_square_matrix(&path)?;
        let floor_ok = k.iter().all(|&v| v >= epsilon);
        if ids == data.station_ids && floor_ok {
            return Ok(IdealCovMatrix {
                k,
                method: IdealMethod::PairLikelihood,
                sigma,
                epsilon,
            });
        }
    }
    let k = ideal_cov_method2(data, sigma, epsilon)?;
    fs::create_dir_all(dir)?;
    write_square_matrix(&path, &data.station_ids, &k.k)?;
    Ok(k)
}

/// Regular map grid over a bounding box in (easting, northing).
#[derive(Debug, Clone, PartialEq)]
pub struct MapGrid {
    pub east: (f64, f64),
    pub north: (f64, f64),
    pub resolution: f64,
    /// (easting, northing, elevation) points; the nearest one supplies each grid
    /// point's elevation. Empty means a constant elevation.
    pub elevation_raster: Vec<[f64; 3]>,
    pub constant_elevation: f64,
}

impl MapGrid {
    pub fn new(east: (f64, f64), north: (f64, f64), resolution: f64) -> Result<Self> {
        let ok = [east.0, east.1, north.0, north.1].iter().all(|v| v.is_finite())
            && east.0 <= east.1
            && north.0 <= north.1;
        if !ok {
            return Err(Error::Config("map bounding box must be finite and ordered".into()));
        }
        if !(resolution > 0.0) {
            return Err(Error::Config("map resolution must be positive".into()));
        }
        Ok(Self {
            east,
            north,
            resolution,
            elevation_raster: vec![],
            constant_elevation: DEFAULT_MAP_ELEVATION,
        })
    }

    fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| lo + i as f64 * step).collect()
    }

    fn elevation_at(&self, e: f64, n: f64) -> f64 {
        self.elevation_raster
            .iter()
            .min_by(|a, b| {
                let da = (a[0] - e).powi(2) + (a[1] - n).powi(2);
                let db = (b[0] - e).powi(2) + (b[1] - n).powi(2);
                da.total_cmp(&db)
            })
            .map(|p| p[2])
            .unwrap_or(self.constant_elevation)
    }

    /// Grid points in row-major order (northing outer, easting inner).
    pub fn points(&self) -> Vec<[f64; 3]> {
        let es = Self::axis(self.east.0, self.east.1, self.resolution);
        let ns = Self::axis(self.north.0, self.north.1, self.resolution);
        ns.iter()
            .flat_map(|&n| es.iter().map(move |&e| (e, n)))
            .map(|(e, n)| [e, n, self.elevation_at(e, n)])
            .collect()
    }
}

/// Elevation raster in the map CSV layout: `easting,northing,elevation[,...]`.
pub fn read_elevation_raster(path: &Path) -> Result<Vec<[f64; 3]>> {
    let mut rdr = reader(path)?;
    expect_header(path, &mut rdr, &["easting", "northing", "elevation"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push([parse_f64(path, &rec, 0)?, parse_f64(path, &rec, 1)?, parse_f64(path, &rec, 2)?]);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapPoint {
    pub easting: f64,
    pub northing: f64,
    pub elevation: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    Station(String),
    Location([f64; 3]),
}

fn resolve_reference(stations: &StationSet, reference: &Reference) -> Result<[f64; 3]> {
    match reference {
        Reference::Station(id) => stations
            .index_of(id)
            .map(|i| stations.coords[i])
            .ok_or_else(|| Error::UnknownStation(id.clone())),
        Reference::Location(x) => Ok(*x),
    }
}

/// θ(reference, g) under a fitted model at every grid point g.
pub fn export_theta_map(model: &FittedModel, reference: &Reference, grid: &MapGrid) -> Result<Vec<MapPoint>> {
    let r = resolve_reference(model.stations(), reference)?;
    Ok(grid
        .points()
        .par_iter()
        .map(|g| MapPoint {
            easting: g[0],
            northing: g[1],
            elevation: g[2],
            theta: model.theta_at(&r, g),
        })
        .collect())
}

/// Ordinary kriging of the reference station's θ̂ row over the grid, clamped to [1, 2].
pub fn export_observed_theta_map(
    theta_hat: &ExtremalMatrix,
    stations: &StationSet,
    reference: &str,
    grid: &MapGrid,
) -> Result<Vec<MapPoint>> {
    let aligned = align_stations(stations, &theta_hat.station_ids)?;
    let r = theta_hat
        .station_ids
        .iter()
        .position(|s| s == reference)
        .ok_or_else(|| Error::UnknownStation(reference.to_string()))?;
    let row: Vec<f64> = (0..theta_hat.n()).map(|j| theta_hat.theta[(r, j)]).collect();
    let krig = KrigingModel::fit(&aligned.coords, &row)?;
    Ok(grid
        .points()
        .par_iter()
        .map(|g| MapPoint {
            easting: g[0],
            northing: g[1],
            elevation: g[2],
            theta: krig.predict(g).clamp(1.0, 2.0),
        })
        .collect())
}

/// `easting,northing,elevation,theta`
pub fn write_map(path: &Path, points: &[MapPoint]) -> Result<()> {
    let mut w = writer(path)?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub const CONFIG_KEYS: &[&str] = &[
    "command",
    "stations",
    "maxima",
    "frechet",
    "gev",
    "theta",
    "model",
    "elevation_raster",
    "output_dir",
    "method",
    "sigma_grid",
    "alpha_grid",
    "d_set",
    "d",
    "r1",
    "r2",
    "epsilon",
    "seed",
    "reference",
    "resolution",
    "bbox",
    "n2_min",
    "n2_max",
    "cache_dir",
    "sigma",
    "alpha",
    "cov",
    "p",
    "truncation",
    "layout",
    "threads",
];

/// Flat `key = value` run configuration. Blank lines and `#` comments are
/// ignored; unknown keys are errors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let key = k.trim().to_string();
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("line {}: unknown key '{key}'", n + 1)));
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Later values win; keys are checked like file keys.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !CONFIG_KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown key '{key}'")));
        }
        self.values.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::Config(format!("missing required key '{key}'")))
    }

    pub fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|_| Error::Config(format!("invalid value '{v}' for '{key}'"))))
            .transpose()
    }

    /// Comma-separated list, or `lo:step:hi` for an inclusive arithmetic range.
    pub fn list_f64(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(v) = self.get(key) else { return Ok(None) };
        let bad = || Error::Config(format!("invalid list '{v}' for '{key}'"));
        if let [lo, step, hi] = v.split(':').collect::<Vec<_>>()[..] {
            let (lo, step, hi): (f64, f64, f64) = (
                lo.trim().parse().map_err(|_| bad())?,
                step.trim().parse().map_err(|_| bad())?,
                hi.trim().parse().map_err(|_| bad())?,
            );
            if !(step > 0.0) || hi < lo {
                return Err(bad());
            }
            let n = ((hi - lo) / step + 1e-9).floor() as usize;
            // rounding to 1e-10 keeps 1.0:0.1:4.0 on exact one-decimal values
            return Ok(Some((0..=n).map(|i| ((lo + i as f64 * step) * 1e10).round() / 1e10).collect()));
        }
        v.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }
}
