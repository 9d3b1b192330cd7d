//! Low-rank flow mean model: PCA of windowed flow means.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::sorted_symmetric_eigen;
use crate::trace::TraceSet;

pub const DEFAULT_WINDOW_BINS: usize = 200;

/// `J × n_w` matrix of non-overlapping window averages.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedMeans {
    pub means: DMatrix<f64>,
    pub window_bins: usize,
}

/// Column `k` averages bins `k·w .. (k+1)·w − 1`; a trailing partial window is dropped.
pub fn window_means(flows: &TraceSet, w: usize) -> Result<WindowedMeans> {
    if w == 0 {
        return Err(Error::InvalidParameter("window must be at least 1 bin".into()));
    }
    if w > flows.len() {
        return Err(Error::InvalidParameter(format!(
            "window of {w} bins exceeds trace length {}",
            flows.len()
        )));
    }
    let n_w = flows.len() / w;
    let v = flows.values();
    let mut means = DMatrix::zeros(v.nrows(), n_w);
    for k in 0..n_w {
        means.set_column(k, &(v.columns(k * w, w).column_sum() / w as f64));
    }
    Ok(WindowedMeans {
        means,
        window_bins: w,
    })
}

/// Orthonormal `J × p` basis together with the full spectrum of `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMatrix {
    f: DMatrix<f64>,
    eigenvalues: DVector<f64>,
}

impl FactorMatrix {
    /// Wraps an externally supplied basis; columns must be orthonormal.
    pub fn from_basis(f: DMatrix<f64>, eigenvalues: Option<DVector<f64>>) -> Result<Self> {
        let p = f.ncols();
        if p == 0 || p > f.nrows() {
            return Err(Error::InvalidParameter(format!(
                "factor matrix must have 1..=J columns, got {p} for J = {}",
                f.nrows()
            )));
        }
        let gram = f.transpose() * &f;
        let dev = (gram - DMatrix::<f64>::identity(p, p)).amax();
        if dev > 1e-8 {
            return Err(Error::InvalidParameter(format!(
                "factor columns are not orthonormal (max deviation {dev:.3e})"
            )));
        }
        let eigenvalues = eigenvalues.unwrap_or_else(|| DVector::zeros(0));
        Ok(Self { f, eigenvalues })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn p(&self) -> usize {
        self.f.ncols()
    }

    pub fn n_flows(&self) -> usize {
        self.f.nrows()
    }

    /// Orthogonal projector `F Fᵗ` onto the factor subspace.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.f * self.f.transpose()
    }

    /// Basis restricted to its first `p` columns.
    pub fn truncate(&self, p: usize) -> Result<Self> {
        if p == 0 || p > self.p() {
            return Err(Error::InvalidParameter(format!(
                "cannot truncate a {}-factor basis to {p}",
                self.p()
            )));
        }
        Ok(Self {
            f: self.f.columns(0, p).into_owned(),
            eigenvalues: self.eigenvalues.clone(),
        })
    }

    /// Writes `p=<p> J=<J>` followed by `J` comma-separated rows.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "p={} J={}", self.p(), self.n_flows())?;
        for row in self.f.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let (p, j) = match lines.next() {
            Some((_, line)) => parse_header(&line?)?,
            None => {
                return Err(Error::Parse {
                    line: 1,
                    message: "missing `p=<p> J=<J>` header".into(),
                })
            }
        };
        let mut data = Vec::with_capacity(p * j);
        let mut rows = 0;
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let before = data.len();
            for cell in line.split(',') {
                data.push(cell.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: i + 1,
                    message: format!("bad number `{}`: {e}", cell.trim()),
                })?);
            }
            if data.len() - before != p {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected {p} columns, found {}", data.len() - before),
                });
            }
            rows += 1;
        }
        if rows != j {
            return Err(Error::Parse {
                line: rows + 1,
                message: format!("expected {j} rows, found {rows}"),
            });
        }
        Self::from_basis(DMatrix::from_row_slice(j, p, &data), None)
    }
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let bad = || Error::Parse {
        line: 1,
        message: format!("expected `p=<p> J=<J>`, found `{line}`"),
    };
    let mut p = None;
    let mut j = None;
    for tok in line.split_whitespace() {
        match tok.split_once('=') {
            Some(("p", v)) => p = v.parse().ok(),
            Some(("J", v)) => j = v.parse().ok(),
            _ => return Err(bad()),
        }
    }
    match (p, j) {
        (Some(p), Some(j)) if p >= 1 && j >= p => Ok((p, j)),
        _ => Err(bad()),
    }
}

fn sign_normalize(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        if let Some(first) = col.iter().copied().find(|x| x.abs() > 1e-12) {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Top-`p` eigenvectors of `B = Σ_k X̄(k) X̄(k)ᵗ`.
pub fn fit_factor_matrix(wm: &WindowedMeans, p: usize) -> Result<FactorMatrix> {
    let j = wm.means.nrows();
    if p == 0 || p > j {
        return Err(Error::InvalidParameter(format!("p must lie in 1..={j}, got {p}")));
    }
    let b = &wm.means * wm.means.transpose();
    let (values, mut vectors) = sorted_symmetric_eigen(&b);
    sign_normalize(&mut vectors);
    let eigenvalues = values.map(|v| if v < 0.0 && v > -1e-10 * values[0].abs().max(1.0) { 0.0 } else { v });
    Ok(FactorMatrix {
        f: vectors.columns(0, p).into_owned(),
        eigenvalues,
    })
}

/// `(λ₁+…+λ_p) / (λ₁+…+λ_J)`, or 1 when the total is 0.
pub fn energy_captured(fm: &FactorMatrix, p: usize) -> Result<f64> {
    let n = fm.eigenvalues.len();
    if p == 0 || p > n {
        return Err(Error::InvalidParameter(format!("p must lie in 1..={n}, got {p}")));
    }
    let total: f64 = fm.eigenvalues.sum();
    if total <= 0.0 {
        return Ok(1.0);
    }
    Ok((fm.eigenvalues.rows(0, p).sum() / total).clamp(0.0, 1.0))
}

/// `Σ_k ‖X̄(k) − P X̄(k)‖²` for the projector `P`.
pub fn projection_residual(means: &DMatrix<f64>, projector: &DMatrix<f64>) -> f64 {
    (means - projector * means).norm_squared()
}
