//! Column-typed series container and its CSV format.
//!
//! The CSV header tags every column as `role:name`; data rows are plain
//! floats printed with Rust's shortest round-trip formatting, so files
//! re-read without loss and identical generations are byte-identical.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnRole {
    /// A (noisy) observation of the underlying signal; for asynchronous
    /// frames the single drawn-value column.
    SourceValue,
    /// One-hot source indicator.
    Indicator,
    /// Gap since the previous row.
    Duration,
    /// Time-of-day encoding.
    Time,
    /// Date encoding.
    Date,
    /// Target-only column, excluded from model inputs.
    Target,
}

impl ColumnRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnRole::SourceValue => "source-value",
            ColumnRole::Indicator => "indicator",
            ColumnRole::Duration => "duration",
            ColumnRole::Time => "time",
            ColumnRole::Date => "date",
            ColumnRole::Target => "target",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "source-value" => ColumnRole::SourceValue,
            "indicator" => ColumnRole::Indicator,
            "duration" => ColumnRole::Duration,
            "time" => ColumnRole::Time,
            "date" => ColumnRole::Date,
            "target" => ColumnRole::Target,
            other => {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("unknown column role {:?}", other),
                })
            }
        })
    }
}

impl fmt::Display for ColumnRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub role: ColumnRole,
    pub name: String,
}

/// Immutable row-major table of timesteps by columns.
#[derive(Clone, Debug)]
pub struct SeriesFrame<S> {
    pub name: String,
    pub columns: Vec<ColumnSpec>,
    values: Vec<S>,
}

impl<S: Scalar> SeriesFrame<S> {
    pub fn new(name: impl Into<String>, columns: Vec<ColumnSpec>, values: Vec<S>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Empty("frame needs at least one column"));
        }
        if values.len() % columns.len() != 0 {
            return Err(Error::Shape(format!(
                "{} values do not fill rows of width {}",
                values.len(),
                columns.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            columns,
            values,
        })
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.values.len() / self.columns.len()
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> S {
        self.values[row * self.columns.len() + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: S) {
        self.values[row * self.columns.len() + col] = v;
    }

    pub fn row(&self, row: usize) -> &[S] {
        let w = self.columns.len();
        &self.values[row * w..(row + 1) * w]
    }

    pub fn columns_with_role(&self, role: ColumnRole) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.role == role)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        let header: Vec<String> = self
            .columns
            .iter()
            .map(|c| format!("{}:{}", c.role, c.name))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        let mut line = String::new();
        for row in 0..self.n_rows() {
            line.clear();
            for (i, v) in self.row(row).iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{}", v));
            }
            writeln!(w, "{}", line)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let reader = BufReader::new(fs::File::open(path)?);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or(Error::Empty("frame csv has no header"))??;
        let mut columns = Vec::new();
        for field in header.split(',') {
            let (role, name) = field.split_once(':').ok_or_else(|| Error::Parse {
                line: 1,
                msg: format!("header field {:?} is not role:name", field),
            })?;
            columns.push(ColumnSpec {
                role: ColumnRole::parse(role)?,
                name: name.to_string(),
            });
        }
        let width = columns.len();
        let mut values = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut count = 0;
            for field in line.split(',') {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    line: i + 2,
                    msg: format!("bad float {:?}", field),
                })?;
                values.push(S::c(v));
                count += 1;
            }
            if count != width {
                return Err(Error::Parse {
                    line: i + 2,
                    msg: format!("{} fields, header has {}", count, width),
                });
            }
        }
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::new(name, columns, values)
    }
}
