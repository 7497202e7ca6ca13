//! Observed series, text ingestion and output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Shortest series the estimators accept.
pub const MIN_SERIES_LEN: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transform {
    None,
    FirstDifference,
}

impl std::str::FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" | "" => Ok(Transform::None),
            "diff" | "first-difference" | "difference" => Ok(Transform::FirstDifference),
            other => Err(Error::Usage(format!("unknown transform '{other}'"))),
        }
    }
}

impl std::fmt::Display for Transform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Transform::None => "none",
            Transform::FirstDifference => "first-difference",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    File(PathBuf),
    Simulated,
}

/// An observed (or simulated) univariate series `y_1..y_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesData {
    values: Vec<f64>,
    source: Source,
    transform: Transform,
}

impl SeriesData {
    pub fn new(values: Vec<f64>, source: Source, transform: Transform) -> Result<Self> {
        if values.len() < MIN_SERIES_LEN {
            return Err(Error::Data(format!(
                "series has {} values, at least {MIN_SERIES_LEN} are required",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("value {} is not finite", i + 1)));
        }
        Ok(Self {
            values,
            source,
            transform,
        })
    }

    pub fn simulated(values: Vec<f64>) -> Result<Self> {
        Self::new(values, Source::Simulated, Transform::None)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn source(&self) -> &Source {
        &self.source
    }

    pub fn transform(&self) -> Transform {
        self.transform
    }

    /// `max(y) - min(y)`.
    pub fn range(&self) -> f64 {
        value_range(&self.values)
    }
}

pub(crate) fn value_range(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    hi - lo
}

fn split_fields(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c == ',' || c == ';' || c == '\t' || c.is_whitespace())
        .filter(|f| !f.is_empty())
}

/// Parse numeric text: one value per line, or delimited columns with
/// `column` selecting the (zero-based) field. Blank lines and lines starting
/// with `#` are skipped; a fully non-numeric first line is taken as a header.
pub fn parse_series(text: &str, path: &Path, column: Option<usize>) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    let mut seen_row = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = split_fields(line).collect();
        if !seen_row && fields.iter().all(|f| f.parse::<f64>().is_err()) && fields.len() > 1 {
            seen_row = true;
            continue;
        }
        seen_row = true;
        let field = match column {
            Some(c) => *fields.get(c).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("missing column {c}"),
            })?,
            None if fields.len() == 1 => fields[0],
            None => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: format!(
                        "found {} fields; select one with a column index",
                        fields.len()
                    ),
                })
            }
        };
        let v: f64 = field.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: format!("'{field}' is not a number"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("'{field}' is not finite"),
            });
        }
        values.push(v);
    }
    Ok(values)
}

pub fn first_difference(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| w[1] - w[0]).collect()
}

pub fn load_series(path: &Path, column: Option<usize>, transform: Transform) -> Result<SeriesData> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut values = parse_series(&text, path, column)?;
    if transform == Transform::FirstDifference {
        values = first_difference(&values);
    }
    SeriesData::new(values, Source::File(path.to_path_buf()), transform)
}

/// Format a float with 17 significant digits.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write one value per line with enough digits to round-trip exactly.
pub fn write_series(path: &Path, values: &[f64]) -> Result<()> {
    let mut out = String::with_capacity(values.len() * 24);
    for v in values {
        let _ = writeln!(out, "{}", format_value(*v));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
