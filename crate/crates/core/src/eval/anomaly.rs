//! Mean-shift injection, per-link control charts and flow isolation.

use std::collections::BTreeSet;

use super::{run_scenario, Method, RunOptions};
use crate::chart::{
    estimate_hurst, run_chart, ChartConfig, ChartResult, HurstEstimate, DEFAULT_LAMBDA,
    DEFAULT_LIMIT_MULTIPLIER, MIN_HURST_LENGTH,
};
use crate::error::{Error, Result};
use crate::joint::ModelConfig;
use crate::mean_model::FactorMatrix;
use crate::sim::{inject_mean_shift, AnomalySpec};
use crate::topology::{route_traffic, ObservationScenario, RoutingMatrix};
use crate::trace::TraceSet;

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyConfig {
    /// 0-based route index of the anomalous flow.
    pub route: usize,
    /// Additive shift in traffic units.
    pub shift: f64,
    /// First shifted bin.
    pub onset: usize,
    /// Link ids to chart.
    pub monitored: Vec<usize>,
    pub lambda: f64,
    pub limit_multiplier: f64,
    /// Post-onset alarm fraction at which a link counts as alarming.
    pub alarm_threshold: f64,
    pub model: ModelConfig,
    /// Fixed Hurst parameter; `None` estimates it from pre-onset residuals.
    pub hurst: Option<f64>,
}

impl AnomalyConfig {
    pub fn new(route: usize, shift: f64, onset: usize, monitored: Vec<usize>) -> Self {
        Self {
            route,
            shift,
            onset,
            monitored,
            lambda: DEFAULT_LAMBDA,
            limit_multiplier: DEFAULT_LIMIT_MULTIPLIER,
            alarm_threshold: 0.5,
            model: ModelConfig::default(),
            hurst: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkChart {
    pub link: usize,
    /// Links used to predict this one.
    pub observed: Vec<usize>,
    /// Bin of the first chart point.
    pub start: usize,
    pub residuals: Vec<f64>,
    pub sigma2: f64,
    pub hurst: HurstEstimate,
    pub lrd: ChartResult,
    pub iid: ChartResult,
    pub alarming: bool,
}

impl LinkChart {
    fn onset_index(chart: &ChartResult) -> usize {
        chart.onset_marker.unwrap_or(chart.alarms.len())
    }

    pub fn pre_onset_rate(chart: &ChartResult) -> f64 {
        chart.alarm_rate(0..Self::onset_index(chart))
    }

    pub fn post_onset_rate(chart: &ChartResult) -> f64 {
        chart.alarm_rate(Self::onset_index(chart)..chart.alarms.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyOutcome {
    pub config: AnomalyConfig,
    pub charts: Vec<LinkChart>,
    /// Routes (0-based) whose links contain every alarming monitored link
    /// and no quiet one.
    pub implicated: Vec<usize>,
}

/// Links sharing a route with `link`, minus the links of `exclude_route`.
pub fn predictor_links(a: &RoutingMatrix, link: usize, exclude_route: usize) -> Vec<usize> {
    let carrying: BTreeSet<usize> = a.links_of_route(exclude_route).into_iter().collect();
    a.links_sharing_routes(link)
        .into_iter()
        .filter(|l| !carrying.contains(l))
        .collect()
}

/// Routes whose link sets cover `alarming` and avoid every other monitored link.
pub fn isolate_flows(a: &RoutingMatrix, monitored: &[usize], alarming: &[usize]) -> Vec<usize> {
    if alarming.is_empty() {
        return Vec::new();
    }
    (0..a.n_routes())
        .filter(|&j| {
            let links = a.links_of_route(j);
            monitored
                .iter()
                .all(|l| links.contains(l) == alarming.contains(l))
        })
        .collect()
}

/// Injects the shift into `flows`, predicts each monitored link with the
/// network-specific model from links not carrying the anomalous flow, and
/// charts the residuals with i.i.d. and LRD-adjusted limits.
pub fn anomaly_experiment(
    flows: &TraceSet,
    a: &RoutingMatrix,
    factors: &FactorMatrix,
    cfg: &AnomalyConfig,
) -> Result<AnomalyOutcome> {
    if cfg.route >= a.n_routes() {
        return Err(Error::InvalidParameter(format!(
            "route index {} outside 0..{}",
            cfg.route,
            a.n_routes()
        )));
    }
    if cfg.monitored.is_empty() {
        return Err(Error::InvalidParameter("no monitored links".into()));
    }
    let start = cfg.model.window;
    if cfg.onset < start + MIN_HURST_LENGTH || cfg.onset >= flows.len() {
        return Err(Error::InvalidParameter(format!(
            "onset {} must leave {} charted bins before it and lie inside the trace",
            cfg.onset, MIN_HURST_LENGTH
        )));
    }
    let shifted = inject_mean_shift(
        flows,
        &AnomalySpec {
            flow_index: cfg.route + 1,
            onset: cfg.onset,
            shift: cfg.shift,
        },
    )?;
    let links = route_traffic(a, &shifted)?;
    let opts = RunOptions {
        stride: 1,
        start: Some(start),
    };
    let onset_idx = cfg.onset - start;
    let mut charts = Vec::with_capacity(cfg.monitored.len());
    for &link in &cfg.monitored {
        let observed = predictor_links(a, link, cfg.route);
        if observed.is_empty() {
            return Err(Error::Scenario(format!(
                "link {link} has no predictor links outside the anomalous flow"
            )));
        }
        let s = ObservationScenario::new(observed.clone(), vec![link])?;
        let run = run_scenario(&links, a, &s, Method::NetworkSpecific, &cfg.model, Some(factors), &opts)?;
        let residuals = run.residuals(0);
        let pre = &residuals[..onset_idx];
        let sigma2 = run.error_variance.row(0).columns(0, onset_idx).sum() / onset_idx as f64;
        let hurst = match cfg.hurst {
            Some(h) => HurstEstimate {
                hurst: h,
                clamped: false,
            },
            None => estimate_hurst(pre)?,
        };
        let base = ChartConfig {
            lambda: cfg.lambda,
            sigma2,
            hurst: hurst.hurst,
            limit_multiplier: cfg.limit_multiplier,
            lrd_adjusted: true,
        };
        let mut lrd = run_chart(&residuals, &base)?;
        let mut iid = run_chart(&residuals, &ChartConfig { lrd_adjusted: false, ..base })?;
        lrd.onset_marker = Some(onset_idx);
        iid.onset_marker = Some(onset_idx);
        let alarming = LinkChart::post_onset_rate(&lrd) >= cfg.alarm_threshold;
        charts.push(LinkChart {
            link,
            observed,
            start,
            residuals,
            sigma2,
            hurst,
            lrd,
            iid,
            alarming,
        });
    }
    let alarming: Vec<usize> = charts.iter().filter(|c| c.alarming).map(|c| c.link).collect();
    let implicated = isolate_flows(a, &cfg.monitored, &alarming);
    Ok(AnomalyOutcome {
        config: cfg.clone(),
        charts,
        implicated,
    })
}
