//! CSV ingestion and emission.
//!
//! Numbers are written with 17 significant digits so that every `f64`
//! survives a write/read cycle unchanged.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::series::{TimeMap, TimeSeries};

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// A series read from disk, rescaled onto `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub series: TimeSeries,
    /// Maps unit times back to the file's time units.
    pub time_map: TimeMap,
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse {
            line,
            message: format!("{kind:?}"),
        },
    }
}

/// Reads `time,<name1>,...,<namep>` CSV from any reader.
pub fn parse_timeseries<R: Read>(reader: R) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        Some(r) => r.map_err(csv_error)?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty file".into(),
            })
        }
    };
    let header_line = header.position().map(|p| p.line() as usize).unwrap_or(1);
    if header.get(0) != Some("time") {
        return Err(Error::Parse {
            line: header_line,
            message: format!("first column must be `time`, got {:?}", header.get(0).unwrap_or("")),
        });
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if names.is_empty() {
        return Err(Error::Parse {
            line: header_line,
            message: "no trajectory columns".into(),
        });
    }
    for (i, name) in names.iter().enumerate() {
        if name.is_empty() {
            return Err(Error::Parse {
                line: header_line,
                message: format!("column {} has an empty name", i + 2),
            });
        }
        if names[..i].contains(name) {
            return Err(Error::DuplicateColumnName(name.clone()));
        }
    }

    let p = names.len();
    let mut times = Vec::new();
    let mut values = Vec::new();
    for record in records {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|pos| pos.line() as usize).unwrap_or(0);
        if record.len() != p + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", p + 1, record.len()),
            });
        }
        let mut parsed = Vec::with_capacity(p + 1);
        for (k, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("field {} ({cell:?}) is not a number", k + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("field {} is not finite", k + 1),
                });
            }
            parsed.push(v);
        }
        if let Some(&prev) = times.last() {
            if parsed[0] <= prev {
                return Err(Error::NonMonotoneTimes { line });
            }
        }
        times.push(parsed[0]);
        values.extend_from_slice(&parsed[1..]);
    }
    if times.len() < 2 {
        return Err(Error::InvalidData(format!("need at least 2 observations, found {}", times.len())));
    }

    let time_map = TimeMap::spanning(&times)?;
    let raw = DMatrix::from_row_slice(times.len(), p, &values);
    let mut unit: Vec<f64> = times.iter().map(|&t| time_map.to_unit(t)).collect();
    unit[0] = 0.0;
    *unit.last_mut().expect("nonempty") = 1.0;
    let series = TimeSeries::with_names(unit, raw, names)?;
    Ok(Ingested { series, time_map })
}

pub fn ingest_timeseries(path: impl AsRef<Path>) -> Result<Ingested> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Io(e).context(format!("opening {}", path.display())))?;
    parse_timeseries(file).map_err(|e| e.context(path.display().to_string()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).map_err(|e| Error::Io(e).context(format!("creating {}", path.display())))?;
    Ok(BufWriter::new(file))
}

/// Writes `time,<names>` rows, with times mapped back through `map`.
pub fn write_timeseries(path: impl AsRef<Path>, ts: &TimeSeries, map: &TimeMap) -> Result<()> {
    let mut out = create(path.as_ref())?;
    write!(out, "time")?;
    for name in ts.names() {
        write!(out, ",{name}")?;
    }
    writeln!(out)?;
    for (i, &t) in ts.times().iter().enumerate() {
        write!(out, "{}", fmt_f64(map.to_original(t)))?;
        for j in 0..ts.p() {
            write!(out, ",{}", fmt_f64(ts.values()[(i, j)]))?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes every entry of a square matrix as `row,col,coefficient` with named indices.
pub fn write_coefficients(path: impl AsRef<Path>, names: &[String], a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != names.len() || a.ncols() != names.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} names for a {}x{} matrix",
            names.len(),
            a.nrows(),
            a.ncols()
        )));
    }
    let mut out = create(path.as_ref())?;
    writeln!(out, "row,col,coefficient")?;
    for (r, rn) in names.iter().enumerate() {
        for (c, cn) in names.iter().enumerate() {
            writeln!(out, "{rn},{cn},{}", fmt_f64(a[(r, c)]))?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a `row,col,coefficient` file back into a dense matrix ordered by `names`.
pub fn read_coefficients(path: impl AsRef<Path>, names: &[String]) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(csv_error)?;
    let index = |name: &str| {
        names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownGeneName(name.to_string()))
    };
    let mut a = DMatrix::zeros(names.len(), names.len());
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != 3 {
            return Err(Error::Parse {
                line,
                message: "expected row,col,coefficient".into(),
            });
        }
        let v: f64 = record[2].parse().map_err(|_| Error::Parse {
            line,
            message: format!("{:?} is not a number", &record[2]),
        })?;
        a[(index(&record[0])?, index(&record[1])?)] = v;
    }
    Ok(a)
}

/// Reads `source,target` edges; a leading `source,target` header is optional.
pub fn parse_edges<R: Read>(reader: R) -> Result<Vec<(String, String)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut edges = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected source,target, found {} fields", record.len()),
            });
        }
        if k == 0 && &record[0] == "source" && &record[1] == "target" {
            continue;
        }
        edges.push((record[0].to_string(), record[1].to_string()));
    }
    Ok(edges)
}

pub fn read_edges(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Io(e).context(format!("opening {}", path.display())))?;
    parse_edges(file).map_err(|e| e.context(path.display().to_string()))
}
