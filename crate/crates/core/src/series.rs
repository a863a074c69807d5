use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Noisy observations of `p` trajectories at `n` shared time points in `[0, 1]`.
///
/// Row `i` of `values` holds the observations of every trajectory at `times[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    times: Vec<f64>,
    values: DMatrix<f64>,
    names: Vec<String>,
}

/// Affine map `original = offset + scale * unit` between recorded time units
/// and the unit interval used internally.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeMap {
    pub offset: f64,
    pub scale: f64,
}

impl TimeMap {
    pub const IDENTITY: TimeMap = TimeMap {
        offset: 0.0,
        scale: 1.0,
    };

    /// Maps a time in unit coordinates back to recorded units.
    pub fn to_original(&self, unit: f64) -> f64 {
        self.offset + self.scale * unit
    }

    /// Fits `original -> [0, 1]` so that the first time maps to 0 and the last to 1.
    pub fn spanning(times: &[f64]) -> Result<TimeMap> {
        let (first, last) = match (times.first(), times.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => return Err(Error::InvalidData("no observation times".into())),
        };
        let scale = last - first;
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidData(format!(
                "time range [{first}, {last}] cannot be mapped onto [0, 1]"
            )));
        }
        Ok(TimeMap {
            offset: first,
            scale,
        })
    }

    pub fn to_unit(&self, original: f64) -> f64 {
        (original - self.offset) / self.scale
    }
}

fn default_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("m{j}")).collect()
}

impl TimeSeries {
    /// Builds a series with default column names `m1..mp`.
    pub fn new(times: Vec<f64>, values: DMatrix<f64>) -> Result<Self> {
        let names = default_names(values.ncols());
        Self::with_names(times, values, names)
    }

    pub fn with_names(times: Vec<f64>, values: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if values.nrows() != times.len() {
            return Err(Error::LengthMismatch {
                expected: times.len(),
                actual: values.nrows(),
            });
        }
        if names.len() != values.ncols() {
            return Err(Error::LengthMismatch {
                expected: values.ncols(),
                actual: names.len(),
            });
        }
        for (i, &t) in times.iter().enumerate() {
            if !t.is_finite() || !(0.0..=1.0).contains(&t) {
                return Err(Error::DomainError(t));
            }
            if i > 0 && t <= times[i - 1] {
                return Err(Error::NonMonotoneTimes { line: i });
            }
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite observation {bad}")));
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(Error::DuplicateColumnName(name.clone()));
            }
        }
        Ok(TimeSeries {
            times,
            values,
            names,
        })
    }

    pub fn n(&self) -> usize {
        self.times.len()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }

    /// Keeps only the listed rows (which must be increasing).
    pub fn select_rows(&self, rows: &[usize]) -> TimeSeries {
        let times = rows.iter().map(|&i| self.times[i]).collect();
        let values = self.values.select_rows(rows);
        TimeSeries {
            times,
            values,
            names: self.names.clone(),
        }
    }

    /// Re-expresses the series on `[0, 1]`, returning the map back to the current units.
    pub fn rescaled_to_unit(&self) -> Result<(TimeSeries, TimeMap)> {
        let map = TimeMap::spanning(&self.times)?;
        let mut times: Vec<f64> = self.times.iter().map(|&t| map.to_unit(t)).collect();
        // pin the endpoints against rounding
        times[0] = 0.0;
        if let Some(last) = times.last_mut() {
            *last = 1.0;
        }
        let ts = TimeSeries::with_names(times, self.values.clone(), self.names.clone())?;
        Ok((ts, map))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unsorted_times() {
        let v = DMatrix::zeros(3, 1);
        let err = TimeSeries::new(vec![0.0, 0.5, 0.4], v).unwrap_err();
        assert!(matches!(err, Error::NonMonotoneTimes { line: 2 }));
    }

    #[test]
    fn rejects_row_count_mismatch() {
        let v = DMatrix::zeros(2, 1);
        assert!(TimeSeries::new(vec![0.0, 0.5, 1.0], v).is_err());
    }

    #[test]
    fn rescale_maps_endpoints() {
        let v = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let ts = TimeSeries::new(vec![0.1, 0.4, 0.9], v).unwrap();
        let (unit, map) = ts.rescaled_to_unit().unwrap();
        assert_eq!(unit.times()[0], 0.0);
        assert_eq!(unit.times()[2], 1.0);
        assert!((unit.times()[1] - 0.375).abs() < 1e-15);
        assert!((map.to_original(0.375) - 0.4).abs() < 1e-15);
    }
}
