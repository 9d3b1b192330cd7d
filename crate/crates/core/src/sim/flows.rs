//! Flow-level traffic synthesis: fGn fluctuations around positive means with
//! a mean–variance power law, plus trends and mean-shift anomalies.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::fgn::{stream_rng, FgnGenerator, FgnSpec};
use crate::error::{Error, Result};
use crate::trace::{TraceKind, TraceSet};

/// Additive mean shift on one flow from `onset` (0-based bin) onwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnomalySpec {
    /// 1-based flow index.
    pub flow_index: usize,
    pub onset: usize,
    pub shift: f64,
}

/// `amplitude · sin(2πt/period + phase)` added to every flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendSpec {
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
}

impl TrendSpec {
    pub fn new(amplitude: f64, period: f64, phase: f64) -> Result<Self> {
        if !(amplitude >= 0.0) || !(period > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "trend needs amplitude >= 0 and period > 0 (got {amplitude}, {period})"
            )));
        }
        Ok(Self {
            amplitude,
            period,
            phase,
        })
    }

    pub fn value(&self, t: usize) -> f64 {
        self.amplitude * (2.0 * PI * t as f64 / self.period + self.phase).sin()
    }
}

/// Flow `j` is `mu_j + sigma · mu_j^gamma · Z_j(t)` with independent
/// unit-variance fGn `Z_j`. Bit-reproducible for a given seed.
pub fn synthesize_flows(
    mu: &[f64],
    hurst: f64,
    sigma: f64,
    gamma: f64,
    length: usize,
    seed: u64,
) -> Result<TraceSet> {
    let means = DMatrix::from_fn(mu.len(), length, |j, _| mu[j]);
    synthesize_flows_with_means(&means, hurst, sigma, gamma, seed)
}

/// Like [`synthesize_flows`] but with a time-varying mean path
/// (`J × length`); the standard deviation follows the instantaneous mean.
pub fn synthesize_flows_with_means(
    means: &DMatrix<f64>,
    hurst: f64,
    sigma: f64,
    gamma: f64,
    seed: u64,
) -> Result<TraceSet> {
    if let Some(pos) = means.iter().position(|&m| !(m > 0.0)) {
        let flow = pos % means.nrows() + 1;
        return Err(Error::InvalidParameter(format!(
            "flow {flow} has nonpositive mean {}",
            means[pos]
        )));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {sigma}")));
    }
    let (j_count, length) = means.shape();
    let gen = FgnGenerator::new(FgnSpec::new(hurst, 1.0, length)?)?;
    let noise: Vec<Vec<f64>> = (0..j_count)
        .into_par_iter()
        .map(|j| gen.sample(&mut stream_rng(seed, j as u64)))
        .collect();
    let values = DMatrix::from_fn(j_count, length, |j, t| {
        let m = means[(j, t)];
        m + sigma * m.abs().powf(gamma) * noise[j][t]
    });
    Ok(TraceSet::new(values, TraceKind::Flow))
}

fn require_flow_level(flows: &TraceSet, op: &str) -> Result<()> {
    if flows.kind() != TraceKind::Flow {
        return Err(Error::InvalidParameter(format!("{op} requires flow-level traces")));
    }
    Ok(())
}

pub fn add_trend(flows: &TraceSet, trend: &TrendSpec) -> Result<TraceSet> {
    require_flow_level(flows, "add_trend")?;
    let mut out = flows.clone();
    let values = out.values_mut();
    for t in 0..values.ncols() {
        let v = trend.value(t);
        values.column_mut(t).add_scalar_mut(v);
    }
    Ok(out)
}

pub fn inject_mean_shift(flows: &TraceSet, a: &AnomalySpec) -> Result<TraceSet> {
    if a.flow_index == 0 || a.flow_index > flows.series_count() {
        return Err(Error::InvalidParameter(format!(
            "anomaly flow index {} outside 1..={}",
            a.flow_index,
            flows.series_count()
        )));
    }
    if a.onset >= flows.len() {
        return Err(Error::InvalidParameter(format!(
            "anomaly onset {} beyond trace length {}",
            a.onset,
            flows.len()
        )));
    }
    let mut out = flows.clone();
    let row = a.flow_index - 1;
    let values = out.values_mut();
    for t in a.onset..values.ncols() {
        values[(row, t)] += a.shift;
    }
    Ok(out)
}
