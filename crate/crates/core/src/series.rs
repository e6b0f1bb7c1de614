//! Recorded time series, CSV round-tripping and reference comparison.

use std::path::Path;

use crate::error::{Result, SimError};

/// Column header of the time axis.
pub const TIME_HEADER: &str = "time_s";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeSeries {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn new(names: Vec<String>) -> Self {
        TimeSeries {
            names,
            times: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, values: Vec<f64>) -> Result<()> {
        if values.len() != self.names.len() {
            return Err(SimError::dim("series row", self.names.len(), values.len()));
        }
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(SimError::Range(format!("time {t} does not follow {last}")));
            }
        }
        self.times.push(t);
        self.rows.push(values);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self
            .column_index(name)
            .ok_or_else(|| SimError::Range(format!("signal '{name}' not present")))?;
        Ok(self.rows.iter().map(|r| r[k]).collect())
    }

    /// Linear interpolation of column `k` at `t`; `None` outside the span.
    pub fn interpolate(&self, k: usize, t: f64) -> Option<f64> {
        let (first, last) = (*self.times.first()?, *self.times.last()?);
        if t < first || t > last {
            return None;
        }
        let j = self.times.partition_point(|&s| s < t);
        if self.times[j] == t {
            return Some(self.rows[j][k]);
        }
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        let (v0, v1) = (self.rows[j - 1][k], self.rows[j][k]);
        Some(v0 + (v1 - v0) * (t - t0) / (t1 - t0))
    }
}

fn io_err(path: &Path, e: impl Into<std::io::Error>) -> SimError {
    SimError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> SimError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io_err(path, io),
        other => SimError::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv(series: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = std::iter::once(TIME_HEADER).chain(series.names.iter().map(String::as_str));
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for (t, row) in series.times.iter().zip(&series.rows) {
        let rec = std::iter::once(fmt_value(*t)).chain(row.iter().map(|v| fmt_value(*v)));
        w.write_record(rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let mut r = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let parse_err = |line: usize, message: String| SimError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.get(0) != Some(TIME_HEADER) {
        return Err(parse_err(1, format!("first column must be '{TIME_HEADER}'")));
    }
    let mut series = TimeSeries::new(header.iter().skip(1).map(str::to_owned).collect());
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(parse_err(line, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        let mut values = Vec::with_capacity(rec.len());
        for field in rec.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("'{field}' is not a number")))?;
            values.push(v);
        }
        let t = values.remove(0);
        series.push(t, values).map_err(|e| parse_err(line, e.to_string()))?;
    }
    Ok(series)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub signal: String,
    pub window: (f64, f64),
    pub samples: usize,
    pub max_abs: f64,
    pub rms: f64,
}

/// Errors of `run` against `reference` at the run's timestamps inside
/// `window`, interpolating the reference linearly.
pub fn compare(run: &TimeSeries, reference: &TimeSeries, signal: &str, window: (f64, f64)) -> Result<ComparisonReport> {
    let (t0, t1) = window;
    if !(t0 <= t1) {
        return Err(SimError::Range(format!("empty window [{t0}, {t1}]")));
    }
    let span = |s: &TimeSeries| -> Option<(f64, f64)> { Some((*s.times.first()?, *s.times.last()?)) };
    let (Some((a0, a1)), Some((b0, b1))) = (span(run), span(reference)) else {
        return Err(SimError::Range("cannot compare an empty series".into()));
    };
    if t0 < a0.max(b0) || t1 > a1.min(b1) {
        return Err(SimError::Range(format!(
            "window [{t0}, {t1}] exceeds the overlap [{}, {}]",
            a0.max(b0),
            a1.min(b1)
        )));
    }
    let kr = run
        .column_index(signal)
        .ok_or_else(|| SimError::Range(format!("signal '{signal}' missing from run")))?;
    let kf = reference
        .column_index(signal)
        .ok_or_else(|| SimError::Range(format!("signal '{signal}' missing from reference")))?;
    let (mut max_abs, mut sq, mut n) = (0.0f64, 0.0, 0usize);
    for (t, row) in run.times.iter().zip(&run.rows) {
        if *t < t0 || *t > t1 {
            continue;
        }
        let r = reference.interpolate(kf, *t).expect("inside overlap");
        let e = (row[kr] - r).abs();
        max_abs = max_abs.max(e);
        sq += e * e;
        n += 1;
    }
    if n == 0 {
        return Err(SimError::Range(format!("no run samples inside [{t0}, {t1}]")));
    }
    Ok(ComparisonReport {
        signal: signal.to_owned(),
        window,
        samples: n,
        max_abs,
        rms: (sq / n as f64).sqrt(),
    })
}
