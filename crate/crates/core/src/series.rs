//! Time-series container, validation and CSV I/O.
//!
//! A [`TimeSeries`] is a strictly increasing time grid paired with finite
//! capability values. Everything downstream consumes and produces this type.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance on spacing deviation for a grid to count as uniform.
pub const UNIFORM_GRID_TOL: f64 = 1e-9;

/// Whether a validation pass should also demand strictly positive values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Positivity {
    Any,
    Required,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TimeSeries {
    /// Builds a series, checking length, ordering and finiteness.
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let series = TimeSeries { times, values };
        series.validate(Positivity::Any)?;
        Ok(series)
    }

    /// Evenly spaced grid of `n` points on `[start, end]`.
    pub fn from_fn(start: f64, end: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let times = linspace(start, end, n);
        let values = times.iter().map(|&t| f(t)).collect();
        TimeSeries::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>) {
        (self.times, self.values)
    }

    /// Same grid, new values. The values are checked for finiteness.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.times.len() {
            return Err(Error::LengthMismatch {
                times: self.times.len(),
                values: values.len(),
            });
        }
        let series = TimeSeries {
            times: self.times.clone(),
            values,
        };
        series.check_values(Positivity::Any)?;
        Ok(series)
    }

    pub fn validate(&self, positivity: Positivity) -> Result<&Self> {
        if self.times.len() != self.values.len() {
            return Err(Error::LengthMismatch {
                times: self.times.len(),
                values: self.values.len(),
            });
        }
        if self.times.is_empty() {
            return Err(Error::EmptySeries);
        }
        for (index, &t) in self.times.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::NonFiniteValue { index });
            }
        }
        for (index, pair) in self.times.windows(2).enumerate() {
            if pair[1] <= pair[0] {
                return Err(Error::NonMonotonicTime {
                    index: index + 1,
                    prev: pair[0],
                    next: pair[1],
                });
            }
        }
        self.check_values(positivity)?;
        Ok(self)
    }

    fn check_values(&self, positivity: Positivity) -> Result<()> {
        for (index, &v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { index });
            }
            if positivity == Positivity::Required && v <= 0.0 {
                return Err(Error::NonPositiveValue { index, value: v });
            }
        }
        Ok(())
    }

    /// Natural log of every value. Times are untouched.
    pub fn log_transform(&self) -> Result<Self> {
        self.check_values(Positivity::Required)?;
        Ok(TimeSeries {
            times: self.times.clone(),
            values: self.values.iter().map(|v| v.ln()).collect(),
        })
    }

    /// Mean spacing, or an error if the grid deviates from uniform by more
    /// than [`UNIFORM_GRID_TOL`] relative.
    pub fn uniform_spacing(&self) -> Result<f64> {
        if self.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: self.len(),
            });
        }
        let n = self.len();
        let mean = (self.times[n - 1] - self.times[0]) / (n - 1) as f64;
        let deviation = self
            .times
            .windows(2)
            .map(|w| ((w[1] - w[0]) - mean).abs())
            .fold(0.0, f64::max)
            / mean;
        if deviation > UNIFORM_GRID_TOL {
            return Err(Error::NonUniformGrid { deviation });
        }
        Ok(mean)
    }

    pub fn same_grid(&self, other: &TimeSeries) -> bool {
        self.times == other.times
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, path)
    }

    /// Parses the `t,value` CSV contract. `origin` is only used in errors.
    pub fn parse_csv(text: &str, origin: &Path) -> Result<Self> {
        let mut lines = text.split('\n').enumerate().map(|(i, l)| {
            (i + 1, l.strip_suffix('\r').unwrap_or(l))
        });
        let schema = |message: &str| Error::Schema {
            path: origin.to_path_buf(),
            message: message.to_string(),
        };
        match lines.next() {
            Some((_, header)) if header.trim_start_matches('\u{feff}') == "t,value" => {}
            Some((_, header)) => {
                return Err(schema(&format!(
                    "expected header `t,value`, found `{header}`"
                )))
            }
            None => return Err(schema("empty file")),
        }

        let mut times = Vec::new();
        let mut values = Vec::new();
        for (line, record) in lines {
            if record.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line,
                message,
            };
            let mut fields = record.split(',');
            let (Some(t), Some(v), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(parse_err(format!("expected 2 fields in `{record}`")));
            };
            let t: f64 = t
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("bad time `{t}`")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("bad value `{v}`")))?;
            times.push(t);
            values.push(v);
        }
        if times.is_empty() {
            return Err(schema("no data rows"));
        }
        TimeSeries::new(times, values)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.len() * 24 + 8);
        out.push_str("t,value\n");
        for (t, v) in self.times.iter().zip(&self.values) {
            // `{}` on f64 is the shortest representation that round-trips.
            let _ = writeln!(out, "{t},{v}");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (end - start) / (n - 1) as f64;
            (0..n).map(|i| start + step * i as f64).collect()
        }
    }
}

/// Formats a float for CSV output; undefined entries are written as `NaN`.
pub(crate) fn fmt_opt(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v}"),
        None => "NaN".to_string(),
    }
}
