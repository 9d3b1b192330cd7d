//! Stationary versus trend-contaminated traffic: the network-specific
//! predictor against simple kriging with the true moments.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::synthetic::gravity_profiles;
use super::{run_scenario, Method, RunOptions};
use crate::error::{Error, Result};
use crate::joint::ModelConfig;
use crate::kriging::krige_blocks;
use crate::mean_model::{fit_factor_matrix, window_means};
use crate::sim::{add_trend, synthesize_flows, TrendSpec};
use crate::topology::{partition, route_traffic, scenario, ObservationScenario, RoutingMatrix};
use crate::trace::TraceSet;

#[derive(Debug, Clone, PartialEq)]
pub struct MisspecConfig {
    pub scenario: ObservationScenario,
    pub windows: Vec<usize>,
    pub length: usize,
    pub hurst: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub p: usize,
    /// Window length of the means the factors are learned from.
    pub factor_window: usize,
    pub trend_period: f64,
    /// `None` uses twice the smallest per-flow standard deviation.
    pub trend_amplitude: Option<f64>,
    pub mean_scale: f64,
    pub structure_seed: u64,
    pub seeds: Vec<u64>,
    pub stride: usize,
}

impl Default for MisspecConfig {
    fn default() -> Self {
        Self {
            scenario: scenario(8).expect("scenario 8 exists"),
            windows: vec![5, 10, 25, 30, 50, 75, 100, 200],
            length: 20_000,
            hurst: 0.8,
            sigma: 1.5,
            gamma: 0.75,
            p: 2,
            factor_window: 25,
            trend_period: 100.0,
            trend_amplitude: None,
            mean_scale: 100.0,
            structure_seed: 1,
            seeds: vec![1, 2, 3],
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MisspecRow {
    pub regime: &'static str,
    pub baseline: f64,
    /// One entry per window.
    pub model: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MisspecTable {
    pub windows: Vec<usize>,
    pub trend_amplitude: f64,
    pub stationary: MisspecRow,
    pub nonstationary: MisspecRow,
}

/// `2 · min_j(σ μ_j^γ)`.
pub fn default_trend_amplitude(mu: &[f64], sigma: f64, gamma: f64) -> f64 {
    2.0 * mu.iter().map(|m| sigma * m.powf(gamma)).fold(f64::INFINITY, f64::min)
}

fn baseline_mse(
    links: &TraceSet,
    means: &DMatrix<f64>,
    cov: &DMatrix<f64>,
    s: &ObservationScenario,
    times: &[usize],
) -> Result<f64> {
    let o = s.observed_rows();
    let u = s.unobserved_rows();
    let c_oo = cov.select_rows(o.iter()).select_columns(o.iter());
    let c_uo = cov.select_rows(u.iter()).select_columns(o.iter());
    let c_uu = cov.select_rows(u.iter()).select_columns(u.iter());
    let y = links.values();
    let mut sum = 0.0;
    for &t in times {
        let mu = means.column(t);
        let mu_o: DVector<f64> = mu.select_rows(o.iter());
        let mu_u: DVector<f64> = mu.select_rows(u.iter());
        let y_o: DVector<f64> = y.column(t).select_rows(o.iter());
        let p = krige_blocks(&mu_o, &mu_u, &c_oo, &c_uo, &c_uu, &y_o, true)?;
        let y_u: DVector<f64> = y.column(t).select_rows(u.iter());
        sum += (p.predicted - y_u).norm_squared();
    }
    Ok(sum / (times.len() * u.len()) as f64)
}

struct SeedResult {
    baseline: [f64; 2],
    model: [Vec<f64>; 2],
}

fn one_seed(
    a: &RoutingMatrix,
    cfg: &MisspecConfig,
    mu: &[f64],
    trend: &TrendSpec,
    seed: u64,
) -> Result<SeedResult> {
    let stationary = synthesize_flows(mu, cfg.hurst, cfg.sigma, cfg.gamma, cfg.length, seed)?;
    let trended = add_trend(&stationary, trend)?;
    let var = DVector::from_iterator(
        mu.len(),
        mu.iter().map(|m| cfg.sigma * cfg.sigma * m.powf(2.0 * cfg.gamma)),
    );
    let e = a.entries();
    let cov = e * DMatrix::from_diagonal(&var) * e.transpose();
    let start = *cfg.windows.iter().max().expect("nonempty windows");
    let times: Vec<usize> = (start..cfg.length).step_by(cfg.stride).collect();
    let opts = RunOptions {
        stride: cfg.stride,
        start: Some(start),
    };
    let mut baseline = [0.0; 2];
    let mut model: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for (k, flows) in [&stationary, &trended].into_iter().enumerate() {
        let links = route_traffic(a, flows)?;
        let flow_means = DMatrix::from_fn(mu.len(), cfg.length, |j, t| {
            mu[j] + if k == 1 { trend.value(t) } else { 0.0 }
        });
        baseline[k] = baseline_mse(&links, &(e * flow_means), &cov, &cfg.scenario, &times)?;
        let factors = fit_factor_matrix(&window_means(flows, cfg.factor_window)?, cfg.p)?;
        for &m in &cfg.windows {
            let mc = ModelConfig {
                p: cfg.p,
                gamma: cfg.gamma,
                window: m,
                ..Default::default()
            };
            let run = run_scenario(&links, a, &cfg.scenario, Method::NetworkSpecific, &mc, Some(&factors), &opts)?;
            model[k].push(run.mse());
        }
    }
    Ok(SeedResult { baseline, model })
}

/// Seed-averaged empirical MSE per regime and window.
pub fn misspecification_experiment(a: &RoutingMatrix, cfg: &MisspecConfig) -> Result<MisspecTable> {
    if cfg.windows.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::InvalidParameter("windows and seeds must be nonempty".into()));
    }
    if cfg.stride == 0 {
        return Err(Error::InvalidParameter("stride must be at least 1".into()));
    }
    partition(a, &cfg.scenario)?;
    let (u, _) = gravity_profiles(a, cfg.structure_seed);
    let mu: Vec<f64> = u.iter().map(|x| x * cfg.mean_scale).collect();
    let amplitude = cfg
        .trend_amplitude
        .unwrap_or_else(|| default_trend_amplitude(&mu, cfg.sigma, cfg.gamma));
    let trend = TrendSpec::new(amplitude, cfg.trend_period, 0.0)?;
    let per_seed: Vec<SeedResult> = cfg
        .seeds
        .par_iter()
        .map(|&seed| one_seed(a, cfg, &mu, &trend, seed))
        .collect::<Result<_>>()?;
    let n = per_seed.len() as f64;
    let avg_row = |k: usize, regime: &'static str| MisspecRow {
        regime,
        baseline: per_seed.iter().map(|r| r.baseline[k]).sum::<f64>() / n,
        model: (0..cfg.windows.len())
            .map(|w| per_seed.iter().map(|r| r.model[k][w]).sum::<f64>() / n)
            .collect(),
    };
    Ok(MisspecTable {
        windows: cfg.windows.clone(),
        trend_amplitude: amplitude,
        stationary: avg_row(0, "stationary"),
        nonstationary: avg_row(1, "non-stationary"),
    })
}
