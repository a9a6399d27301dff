//! Station layouts and block-maxima tables.

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::error::{Error, Result};

/// Station identifiers with planar coordinates (km) and elevation (m).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationSet {
    pub ids: Vec<String>,
    /// Rows are (easting km, northing km, elevation m).
    pub coords: Vec<[f64; 3]>,
}

impl StationSet {
    pub fn new(ids: Vec<String>, coords: Vec<[f64; 3]>) -> Result<Self> {
        if ids.len() != coords.len() {
            return Err(Error::DimensionMismatch {
                expected: ids.len(),
                got: coords.len(),
            });
        }
        let mut seen = HashSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Config(format!("duplicate station id '{id}'")));
            }
        }
        if coords.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite station coordinate".into()));
        }
        Ok(Self { ids, coords })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|s| s == id)
    }

    pub fn location(&self, i: usize) -> Vector3<f64> {
        Vector3::from(self.coords[i])
    }

    /// Planar (easting, northing) distance between two stations.
    pub fn planar_distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (&self.coords[i], &self.coords[j]);
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }

    /// The `k` nearest other stations of `target` in the (easting, northing) plane,
    /// restricted to `pool` when given. Ties resolve by station index.
    pub fn nearest_neighbors(&self, target: usize, k: usize, pool: Option<&[usize]>) -> Vec<usize> {
        let candidates: Vec<usize> = match pool {
            Some(p) => p.iter().copied().filter(|&j| j != target).collect(),
            None => (0..self.len()).filter(|&j| j != target).collect(),
        };
        let mut ranked: Vec<(f64, usize)> = candidates
            .into_iter()
            .map(|j| (self.planar_distance(target, j), j))
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        ranked.into_iter().take(k).map(|(_, j)| j).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> StationSet {
        StationSet {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            coords: idx.iter().map(|&i| self.coords[i]).collect(),
        }
    }
}

/// p years × n stations of seasonal block maxima.
#[derive(Debug, Clone, PartialEq)]
pub struct MaximaMatrix {
    pub values: DMatrix<f64>,
    pub station_ids: Vec<String>,
    pub years: Vec<String>,
}

impl MaximaMatrix {
    pub fn new(values: DMatrix<f64>, station_ids: Vec<String>, years: Vec<String>) -> Result<Self> {
        check_shape(&values, station_ids.len(), years.len())?;
        if let Some((k, i)) = first_bad(&values, |v| v.is_finite() && v > 0.0) {
            return Err(Error::OutOfRange {
                value: values[(k, i)],
                range: "block maxima must be finite and > 0",
            });
        }
        Ok(Self {
            values,
            station_ids,
            years,
        })
    }

    pub fn n_stations(&self) -> usize {
        self.values.ncols()
    }

    pub fn n_years(&self) -> usize {
        self.values.nrows()
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.values.column(i).iter().copied().collect()
    }

    pub fn select_stations(&self, idx: &[usize]) -> MaximaMatrix {
        MaximaMatrix {
            values: self.values.select_columns(idx),
            station_ids: idx.iter().map(|&i| self.station_ids[i].clone()).collect(),
            years: self.years.clone(),
        }
    }
}

/// Block maxima on the unit-Fréchet scale.
#[derive(Debug, Clone, PartialEq)]
pub struct FrechetMatrix {
    pub values: DMatrix<f64>,
    pub station_ids: Vec<String>,
    pub years: Vec<String>,
}

impl FrechetMatrix {
    pub fn new(values: DMatrix<f64>, station_ids: Vec<String>, years: Vec<String>) -> Result<Self> {
        check_shape(&values, station_ids.len(), years.len())?;
        if let Some((k, i)) = first_bad(&values, |v| v.is_finite() && v > 0.0) {
            return Err(Error::OutOfRange {
                value: values[(k, i)],
                range: "unit-Fréchet values must be finite and > 0",
            });
        }
        Ok(Self {
            values,
            station_ids,
            years,
        })
    }

    /// Wraps a matrix with generated ids `s0, s1, ...` and years `0, 1, ...`.
    pub fn unnamed(values: DMatrix<f64>) -> Result<Self> {
        let ids = (0..values.ncols()).map(|i| format!("s{i}")).collect();
        let years = (0..values.nrows()).map(|k| k.to_string()).collect();
        Self::new(values, ids, years)
    }

    pub fn n_stations(&self) -> usize {
        self.values.ncols()
    }

    pub fn n_years(&self) -> usize {
        self.values.nrows()
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.values.column(i).iter().copied().collect()
    }

    pub fn select_stations(&self, idx: &[usize]) -> FrechetMatrix {
        FrechetMatrix {
            values: self.values.select_columns(idx),
            station_ids: idx.iter().map(|&i| self.station_ids[i].clone()).collect(),
            years: self.years.clone(),
        }
    }
}

fn check_shape(values: &DMatrix<f64>, n: usize, p: usize) -> Result<()> {
    if values.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: values.ncols(),
        });
    }
    if values.nrows() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: values.nrows(),
        });
    }
    Ok(())
}

fn first_bad(values: &DMatrix<f64>, ok: impl Fn(f64) -> bool) -> Option<(usize, usize)> {
    for i in 0..values.ncols() {
        for k in 0..values.nrows() {
            if !ok(values[(k, i)]) {
                return Some((k, i));
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicate_ids() {
        let r = StationSet::new(vec!["a".into(), "a".into()], vec![[0.0; 3], [1.0; 3]]);
        assert!(r.is_err());
    }

    #[test]
    fn neighbors_use_planar_distance_only() {
        let s = StationSet::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 5000.0], [2.0, 0.0, 0.0]],
        )
        .unwrap();
        assert_eq!(s.nearest_neighbors(0, 2, None), vec![1, 2]);
        assert_eq!(s.nearest_neighbors(0, 1, Some(&[0, 2])), vec![2]);
    }

    #[test]
    fn frechet_rejects_nonpositive() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert!(FrechetMatrix::unnamed(m).is_err());
    }
}
