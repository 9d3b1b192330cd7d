//! Mean–variance exponent regression and parameter sweeps.

use std::fmt;
use std::str::FromStr;

use log::warn;

use super::{run_scenario, Method, RunOptions};
use crate::error::{Error, Result};
use crate::joint::ModelConfig;
use crate::mean_model::FactorMatrix;
use crate::topology::{ObservationScenario, RoutingMatrix};
use crate::trace::TraceSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaCalibration {
    pub gamma_hat: f64,
    pub r_squared: f64,
    /// `(first bin, length)` of the window used.
    pub window: (usize, usize),
}

/// Regresses `log S_j` on `log X̄_j` across flows over bins
/// `start .. start + len`.
pub fn gamma_regression(flows: &TraceSet, start: usize, len: usize) -> Result<GammaCalibration> {
    if len < 2 || start + len > flows.len() {
        return Err(Error::InvalidParameter(format!(
            "window {start}+{len} does not fit a trace of {} bins",
            flows.len()
        )));
    }
    let block = flows.values().columns(start, len);
    let mut pts = Vec::new();
    for row in block.row_iter() {
        let mean = row.sum() / len as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (len - 1) as f64;
        if mean > 0.0 && var > 0.0 {
            pts.push((mean.ln(), 0.5 * var.ln()));
        }
    }
    if pts.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "need at least 3 flows with positive mean and variance, found {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("all flow means are equal".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(GammaCalibration {
        gamma_hat: slope,
        r_squared,
        window: (start, len),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    Gamma,
    P,
    Window,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Gamma => "gamma",
            SweepParameter::P => "p",
            SweepParameter::Window => "window_m",
        }
    }

    fn apply(self, base: &ModelConfig, value: f64) -> Result<ModelConfig> {
        let as_count = |v: f64| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::InvalidParameter(format!(
                    "{} grid values must be positive integers, got {v}",
                    self.name()
                )))
            }
        };
        let mut cfg = *base;
        match self {
            SweepParameter::Gamma => cfg.gamma = value,
            SweepParameter::P => cfg.p = as_count(value)?,
            SweepParameter::Window => cfg.window = as_count(value)?,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gamma" => Ok(SweepParameter::Gamma),
            "p" => Ok(SweepParameter::P),
            "window" | "window_m" | "m" => Ok(SweepParameter::Window),
            other => Err(Error::InvalidParameter(format!(
                "unknown sweep parameter `{other}` (expected gamma, p or window_m)"
            ))),
        }
    }
}

/// ReMSE of the network-specific predictor over `(scenario, value)`.
/// A cell is `None` when the fit failed numerically at some bin.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub parameter: SweepParameter,
    pub grid: Vec<f64>,
    pub scenarios: Vec<ObservationScenario>,
    pub remse: Vec<Vec<Option<f64>>>,
}

impl SweepReport {
    /// `max/min` of a scenario's finite cells.
    pub fn spread_ratio(&self, scenario_row: usize) -> Option<f64> {
        let vals: Vec<f64> = self.remse[scenario_row].iter().flatten().copied().collect();
        if vals.len() != self.grid.len() {
            return None;
        }
        let max = vals.iter().copied().fold(f64::MIN, f64::max);
        let min = vals.iter().copied().fold(f64::MAX, f64::min);
        Some(max / min)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn sweep(
    parameter: SweepParameter,
    grid: &[f64],
    scenarios: &[ObservationScenario],
    links: &TraceSet,
    a: &RoutingMatrix,
    factors: &FactorMatrix,
    base: &ModelConfig,
    opts: &RunOptions,
) -> Result<SweepReport> {
    if grid.is_empty() || scenarios.is_empty() {
        return Err(Error::InvalidParameter("sweep grid and scenario list must be nonempty".into()));
    }
    let configs: Vec<ModelConfig> = grid
        .iter()
        .map(|&v| parameter.apply(base, v))
        .collect::<Result<_>>()?;
    // compare all grid values on the same bins
    let start = configs.iter().map(|c| c.window).max().unwrap_or(base.window);
    let opts = RunOptions {
        start: Some(opts.start.unwrap_or(0).max(start)),
        ..*opts
    };
    let mut remse = Vec::with_capacity(scenarios.len());
    for s in scenarios {
        let mut row = Vec::with_capacity(grid.len());
        for (cfg, v) in configs.iter().zip(grid) {
            match run_scenario(links, a, s, Method::NetworkSpecific, cfg, Some(factors), &opts) {
                Ok(run) => row.push(Some(run.remse)),
                Err(e) if e.is_numerical() => {
                    warn!("{} = {v}: scenario {:?} failed: {e}", parameter, s.scenario_id());
                    row.push(None);
                }
                Err(e) => return Err(e),
            }
        }
        remse.push(row);
    }
    Ok(SweepReport {
        parameter,
        grid: grid.to_vec(),
        scenarios: scenarios.to_vec(),
        remse,
    })
}
