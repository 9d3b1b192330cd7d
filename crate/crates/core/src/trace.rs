//! Time-indexed traffic volumes for flows or links.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default aggregation interval in seconds.
pub const DEFAULT_BIN_SECONDS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Flow,
    Link,
}

/// A `series_count × length` matrix of traffic volumes (bytes per bin).
///
/// Column `t` holds the network-wide vector at time bin `t`, so routing a
/// flow trace is a single matrix product.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    values: DMatrix<f64>,
    bin_seconds: f64,
    kind: TraceKind,
    labels: Vec<String>,
}

impl TraceSet {
    pub fn new(values: DMatrix<f64>, kind: TraceKind) -> Self {
        let labels = default_labels(kind, values.nrows());
        Self {
            values,
            bin_seconds: DEFAULT_BIN_SECONDS,
            kind,
            labels,
        }
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.values.nrows() {
            return Err(Error::Dimension {
                context: "trace labels",
                expected: self.values.nrows(),
                actual: labels.len(),
            });
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn with_bin_seconds(mut self, bin_seconds: f64) -> Result<Self> {
        if !(bin_seconds > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bin width must be positive, got {bin_seconds}"
            )));
        }
        self.bin_seconds = bin_seconds;
        Ok(self)
    }

    /// Builds a trace from one vector per series.
    pub fn from_series(series: &[Vec<f64>], kind: TraceKind) -> Result<Self> {
        let rows = series.len();
        let len = series.first().map_or(0, Vec::len);
        if let Some(bad) = series.iter().find(|s| s.len() != len) {
            return Err(Error::Dimension {
                context: "trace series length",
                expected: len,
                actual: bad.len(),
            });
        }
        let values = DMatrix::from_fn(rows, len, |i, t| series[i][t]);
        Ok(Self::new(values, kind))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn kind(&self) -> TraceKind {
        self.kind
    }

    pub fn bin_seconds(&self) -> f64 {
        self.bin_seconds
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn series_count(&self) -> usize {
        self.values.nrows()
    }

    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }

    /// Series `i` (0-based) as an owned vector.
    pub fn series(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    /// Network-wide vector at time bin `t`.
    pub fn at(&self, t: usize) -> DVector<f64> {
        self.values.column(t).into_owned()
    }

    /// Keeps only the given rows (0-based), in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> TraceSet {
        let values = self.values.select_rows(rows.iter());
        let labels = rows.iter().map(|&r| self.labels[r].clone()).collect();
        TraceSet {
            values,
            bin_seconds: self.bin_seconds,
            kind: self.kind,
            labels,
        }
    }

    /// Writes a delimited text table: `bin,<label>,...` header, then one row per bin.
    pub fn write_delimited<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "bin")?;
        for l in &self.labels {
            write!(out, ",{l}")?;
        }
        writeln!(out)?;
        for t in 0..self.len() {
            write!(out, "{t}")?;
            for i in 0..self.series_count() {
                write!(out, ",{}", self.values[(i, t)])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read_delimited<R: BufRead>(input: R, kind: TraceKind) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((_, line)) => {
                    let line = line?;
                    if !line.trim().is_empty() {
                        break line;
                    }
                }
                None => {
                    return Err(Error::Parse {
                        line: 1,
                        message: "missing header".into(),
                    })
                }
            }
        };
        let labels: Vec<String> = header
            .split(',')
            .skip(1)
            .map(|s| s.trim().to_string())
            .collect();
        let mut series = vec![Vec::new(); labels.len()];
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != labels.len() + 1 {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!(
                        "expected {} fields, found {}",
                        labels.len() + 1,
                        fields.len()
                    ),
                });
            }
            for (s, field) in series.iter_mut().zip(&fields[1..]) {
                let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                    line: idx + 1,
                    message: format!("not a number: {field:?}"),
                })?;
                s.push(v);
            }
        }
        TraceSet::from_series(&series, kind)?.with_labels(labels)
    }
}

fn default_labels(kind: TraceKind, n: usize) -> Vec<String> {
    let prefix = match kind {
        TraceKind::Flow => "flow",
        TraceKind::Link => "link",
    };
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}
