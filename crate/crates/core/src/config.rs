//! Declarative run configuration read from a TOML file.
//!
//! Every section and key is optional. Relative paths resolve against the
//! directory holding the config file.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use log::info;
use serde::Deserialize;

use crate::chart::{DEFAULT_LAMBDA, DEFAULT_LIMIT_MULTIPLIER};
use crate::error::{Error, Result};
use crate::eval::anomaly::AnomalyConfig;
use crate::eval::calibration::SweepParameter;
use crate::eval::synthetic::{analog_flows, mean_path, AnalogSpec, MeanStructure};
use crate::eval::{Method, RunOptions};
use crate::joint::ModelConfig;
use crate::mean_model::{fit_factor_matrix, window_means, FactorMatrix, DEFAULT_WINDOW_BINS};
use crate::topology::{
    build_routing_matrix, internet2_topology, route_traffic, scenario, NetworkGraph,
    ObservationScenario, RoutePolicy, RoutingMatrix,
};
use crate::trace::{TraceKind, TraceSet};

/// Default training trace length as a multiple of the traffic length.
pub const TRAINING_LENGTH_FACTOR: usize = 10;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub topology: TopologySection,
    pub traffic: TrafficSection,
    pub model: ModelSection,
    pub run: RunSection,
    pub sweep: SweepSection,
    pub chart: ChartSection,
    pub output: OutputSection,
    #[serde(skip)]
    base_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyName {
    ShortestHop,
    #[default]
    ShortestMetric,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySection {
    /// Link list file; the built-in Internet2 backbone when absent.
    pub file: Option<PathBuf>,
    pub policy: PolicyName,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficSection {
    /// Flow trace file; takes precedence over simulation.
    pub flows: Option<PathBuf>,
    /// Link trace file, used when no flow trace is given.
    pub links: Option<PathBuf>,
    pub length: usize,
    pub seeds: Vec<u64>,
    pub hurst: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub structure: MeanStructure,
    pub mean_scale: f64,
    pub period: f64,
    pub modulation: f64,
    pub structure_seed: u64,
}

impl Default for TrafficSection {
    fn default() -> Self {
        let a = AnalogSpec::default();
        Self {
            flows: None,
            links: None,
            length: a.length,
            seeds: vec![1],
            hurst: a.hurst,
            sigma: a.sigma,
            gamma: a.gamma,
            structure: a.structure,
            mean_scale: a.mean_scale,
            period: a.period,
            modulation: a.modulation,
            structure_seed: a.structure_seed,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub p: usize,
    pub gamma: f64,
    pub window: usize,
    pub eps: f64,
    pub min_iterations: usize,
    pub max_iterations: usize,
    /// Averaging window for learning the factor matrix.
    pub factor_window: usize,
    /// Factor matrix file; learned from a training trace when absent.
    pub factors: Option<PathBuf>,
    /// Offset added to the traffic seed for the simulated training trace.
    pub training_seed_offset: u64,
    /// Length of the simulated training trace; ten times the traffic length when absent.
    pub training_length: Option<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            p: m.p,
            gamma: m.gamma,
            window: m.window,
            eps: m.convergence_eps,
            min_iterations: m.min_iterations,
            max_iterations: m.max_iterations,
            factor_window: DEFAULT_WINDOW_BINS,
            factors: None,
            training_seed_offset: 1000,
            training_length: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Scenario for `predict`.
    pub scenario: usize,
    /// Custom observed links; overrides `scenario` for `predict`.
    pub observed: Option<Vec<usize>>,
    pub unobserved: Option<Vec<usize>>,
    /// Scenarios for `evaluate` and `sweep`.
    pub scenarios: Vec<usize>,
    pub method: String,
    pub methods: Vec<String>,
    pub stride: usize,
    pub start: Option<usize>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            scenario: 7,
            observed: None,
            unobserved: None,
            scenarios: (1..=12).collect(),
            method: "network".into(),
            methods: Method::ALL.iter().map(|m| m.name().to_string()).collect(),
            stride: 1,
            start: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: String,
    pub grid: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            parameter: "gamma".into(),
            grid: vec![0.5, 0.75, 1.0, 1.5, 2.0],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChartSection {
    /// 1-based flow index of the anomalous flow.
    pub flow: Option<usize>,
    pub source: Option<String>,
    pub destination: Option<String>,
    /// Shift size in flow standard deviations at onset.
    pub shift_std: f64,
    /// Absolute shift; overrides `shift_std`.
    pub shift: Option<f64>,
    /// Defaults to the middle of the trace.
    pub onset: Option<usize>,
    pub monitored: Vec<usize>,
    pub lambda: f64,
    pub c: f64,
    /// Fixed Hurst parameter; estimated from pre-onset residuals when absent.
    pub hurst: Option<f64>,
    pub alarm_threshold: f64,
}

impl Default for ChartSection {
    fn default() -> Self {
        Self {
            flow: None,
            source: Some("Kansas City".into()),
            destination: Some("Atlanta".into()),
            shift_std: 5.0,
            shift: None,
            onset: None,
            monitored: vec![7, 13, 17],
            lambda: DEFAULT_LAMBDA,
            c: DEFAULT_LIMIT_MULTIPLIER,
            hurst: None,
            alarm_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// Link traces, with the flows that produced them when known.
#[derive(Debug, Clone)]
pub struct Traffic {
    pub flows: Option<TraceSet>,
    pub links: TraceSet,
    /// Flow means per bin for simulated traffic.
    pub flow_means: Option<nalgebra::DMatrix<f64>>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))
}

impl Config {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.traffic.seeds.is_empty() {
            return bad("traffic.seeds must be nonempty".into());
        }
        if self.run.stride == 0 {
            return bad("run.stride must be at least 1".into());
        }
        if self.run.scenarios.is_empty() {
            return bad("run.scenarios must be nonempty".into());
        }
        if self.sweep.grid.is_empty() {
            return bad("sweep.grid must be nonempty".into());
        }
        self.method()?;
        self.methods()?;
        self.sweep_parameter()?;
        self.model_config().validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }

    pub fn routing(&self) -> Result<RoutingMatrix> {
        let graph = match &self.topology.file {
            Some(f) => NetworkGraph::read_links(open(&self.resolve(f))?)?,
            None => internet2_topology(),
        };
        let policy = match self.topology.policy {
            PolicyName::ShortestHop => RoutePolicy::ShortestHop,
            PolicyName::ShortestMetric => RoutePolicy::ShortestMetric,
        };
        build_routing_matrix(&graph, policy)
    }

    pub fn model_config(&self) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            p: m.p,
            gamma: m.gamma,
            window: m.window,
            convergence_eps: m.eps,
            min_iterations: m.min_iterations,
            max_iterations: m.max_iterations,
        }
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            stride: self.run.stride,
            start: self.run.start,
        }
    }

    pub fn method(&self) -> Result<Method> {
        self.run.method.parse().map_err(|e: Error| Error::Config(e.to_string()))
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        self.run
            .methods
            .iter()
            .map(|m| m.parse().map_err(|e: Error| Error::Config(e.to_string())))
            .collect()
    }

    pub fn sweep_parameter(&self) -> Result<SweepParameter> {
        self.sweep.parameter.parse().map_err(|e: Error| Error::Config(e.to_string()))
    }

    /// The `predict` scenario.
    pub fn scenario(&self) -> Result<ObservationScenario> {
        match (&self.run.observed, &self.run.unobserved) {
            (Some(o), Some(u)) => ObservationScenario::new(o.clone(), u.clone()),
            (None, None) => scenario(self.run.scenario),
            _ => Err(Error::Config("run.observed and run.unobserved must be given together".into())),
        }
    }

    pub fn scenarios(&self) -> Result<Vec<ObservationScenario>> {
        self.run.scenarios.iter().map(|&id| scenario(id)).collect()
    }

    pub fn analog_spec(&self) -> AnalogSpec {
        let t = &self.traffic;
        AnalogSpec {
            length: t.length,
            hurst: t.hurst,
            sigma: t.sigma,
            gamma: t.gamma,
            structure: t.structure,
            mean_scale: t.mean_scale,
            period: t.period,
            modulation: t.modulation,
            structure_seed: t.structure_seed,
        }
    }

    /// True when traffic comes from the simulator rather than trace files.
    pub fn simulated(&self) -> bool {
        self.traffic.flows.is_none() && self.traffic.links.is_none()
    }

    /// Traffic for `seed`: read from the configured files or simulated.
    pub fn traffic(&self, a: &RoutingMatrix, seed: u64) -> Result<Traffic> {
        if let Some(f) = &self.traffic.flows {
            let flows = TraceSet::read_delimited(open(&self.resolve(f))?, TraceKind::Flow)?;
            let links = route_traffic(a, &flows)?;
            return Ok(Traffic { flows: Some(flows), links, flow_means: None });
        }
        if let Some(f) = &self.traffic.links {
            let links = TraceSet::read_delimited(open(&self.resolve(f))?, TraceKind::Link)?;
            if links.series_count() != a.n_links() {
                return Err(Error::Dimension {
                    context: "link trace",
                    expected: a.n_links(),
                    actual: links.series_count(),
                });
            }
            return Ok(Traffic { flows: None, links, flow_means: None });
        }
        let spec = self.analog_spec();
        let flows = analog_flows(a, &spec, seed)?;
        let links = route_traffic(a, &flows)?;
        Ok(Traffic {
            flows: Some(flows),
            links,
            flow_means: Some(mean_path(a, &spec)?),
        })
    }

    /// Factor matrix from the configured file, a simulated training trace
    /// (for simulated traffic) or the given flows.
    pub fn factors(&self, a: &RoutingMatrix, traffic: &Traffic, seed: u64) -> Result<FactorMatrix> {
        self.factors_with_rank(a, traffic, seed, self.model.p)
    }

    /// Like [`Config::factors`] but learns `p` columns.
    pub fn factors_with_rank(&self, a: &RoutingMatrix, traffic: &Traffic, seed: u64, p: usize) -> Result<FactorMatrix> {
        if let Some(f) = &self.model.factors {
            let fm = FactorMatrix::read(open(&self.resolve(f))?)?;
            if fm.n_flows() != a.n_routes() {
                return Err(Error::Dimension {
                    context: "factor matrix rows",
                    expected: a.n_routes(),
                    actual: fm.n_flows(),
                });
            }
            return Ok(fm);
        }
        let training;
        let flows = if self.simulated() {
            let spec = self.analog_spec();
            let length = self.model.training_length.unwrap_or(TRAINING_LENGTH_FACTOR * spec.length);
            let spec = AnalogSpec { length, ..spec };
            training = analog_flows(a, &spec, seed.wrapping_add(self.model.training_seed_offset))?;
            &training
        } else {
            info!("learning factors from the evaluation flows");
            traffic.flows.as_ref().ok_or_else(|| {
                Error::Config("model.factors is required when only link traces are given".into())
            })?
        };
        fit_factor_matrix(&window_means(flows, self.model.factor_window)?, p)
    }

    /// Anomaly settings for `traffic`; the route is 0-based.
    pub fn anomaly_config(&self, a: &RoutingMatrix, traffic: &Traffic) -> Result<AnomalyConfig> {
        let c = &self.chart;
        let route = match (c.flow, &c.source, &c.destination) {
            (Some(j), _, _) if (1..=a.n_routes()).contains(&j) => j - 1,
            (Some(j), _, _) => {
                return Err(Error::Config(format!("chart.flow {j} outside 1..={}", a.n_routes())))
            }
            (None, Some(s), Some(d)) => a
                .route_index(s, d)
                .ok_or_else(|| Error::Config(format!("no route {s} -> {d}")))?,
            _ => return Err(Error::Config("chart needs flow or source and destination".into())),
        };
        let n = traffic.links.len();
        let onset = c.onset.unwrap_or(n / 2);
        let shift = match c.shift {
            Some(s) => s,
            None => c.shift_std * self.flow_std(traffic, route, onset)?,
        };
        let mut cfg = AnomalyConfig::new(route, shift, onset, c.monitored.clone());
        cfg.lambda = c.lambda;
        cfg.limit_multiplier = c.c;
        cfg.alarm_threshold = c.alarm_threshold;
        cfg.model = self.model_config();
        cfg.hurst = c.hurst;
        Ok(cfg)
    }

    /// `σ μ^γ` at `t` for simulated flows, otherwise the sample standard
    /// deviation of the flow before `t`.
    fn flow_std(&self, traffic: &Traffic, route: usize, t: usize) -> Result<f64> {
        if let Some(m) = &traffic.flow_means {
            let mu = m[(route, t.min(m.ncols() - 1))];
            return Ok(self.traffic.sigma * mu.powf(self.traffic.gamma));
        }
        let flows = traffic
            .flows
            .as_ref()
            .ok_or_else(|| Error::Config("chart.shift is required when only link traces are given".into()))?;
        let x = flows.series(route);
        let pre = &x[..t.min(x.len())];
        if pre.len() < 2 {
            return Err(Error::Config("onset leaves too few bins to size the shift".into()));
        }
        let mean = pre.iter().sum::<f64>() / pre.len() as f64;
        let var = pre.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (pre.len() - 1) as f64;
        Ok(var.sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let cfg = Config::parse("", Path::new("/tmp")).unwrap();
        assert_eq!(cfg.model_config(), ModelConfig::default());
        assert_eq!(cfg.method().unwrap(), Method::NetworkSpecific);
        assert_eq!(cfg.scenarios().unwrap().len(), 12);
        assert_eq!(cfg.output_dir(), PathBuf::from("/tmp/out"));
        assert!(cfg.simulated());
    }

    #[test]
    fn sample_config_loads() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/internet2.toml");
        let cfg = Config::load(&path).unwrap();
        assert_eq!(cfg.traffic.seeds, vec![1, 2, 3]);
        assert_eq!(cfg.sweep_parameter().unwrap(), SweepParameter::Window);
        assert_eq!(cfg.scenarios().unwrap().len(), 9);
        assert_eq!(cfg.output_dir(), path.parent().unwrap().join("out"));
        assert_eq!(cfg.routing().unwrap().n_routes(), 72);
    }

    #[test]
    fn sections_parse() {
        let text = r#"
            [topology]
            policy = "shortest-hop"
            [traffic]
            length = 500
            seeds = [3, 4]
            structure = "full-rank"
            [model]
            p = 3
            window = 40
            [run]
            scenarios = [5, 6]
            method = "ordinary"
            stride = 5
            [sweep]
            parameter = "window_m"
            grid = [10, 20]
            [chart]
            flow = 20
            lambda = 0.2
            [output]
            dir = "/abs/out"
        "#;
        let cfg = Config::parse(text, Path::new(".")).unwrap();
        assert_eq!(cfg.topology.policy, PolicyName::ShortestHop);
        assert_eq!(cfg.traffic.seeds, vec![3, 4]);
        assert_eq!(cfg.analog_spec().structure, MeanStructure::FullRank);
        assert_eq!(cfg.model_config().p, 3);
        assert_eq!(cfg.method().unwrap(), Method::Ordinary);
        assert_eq!(cfg.run_options().stride, 5);
        assert_eq!(cfg.sweep_parameter().unwrap(), SweepParameter::Window);
        assert_eq!(cfg.chart.flow, Some(20));
        assert_eq!(cfg.output_dir(), PathBuf::from("/abs/out"));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for text in [
            "[model]\nbogus = 1",
            "[run]\nmethod = \"kriging\"",
            "[run]\nstride = 0",
            "[sweep]\nparameter = \"lambda\"",
            "[model]\ngamma = -1.0",
            "[traffic]\nseeds = []",
            "not toml at all [",
        ] {
            assert!(matches!(Config::parse(text, Path::new(".")), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn simulated_traffic_and_anomaly_settings() {
        let cfg = Config::parse("[traffic]\nlength = 300\n[model]\nfactor_window = 50", Path::new(".")).unwrap();
        let a = cfg.routing().unwrap();
        let t = cfg.traffic(&a, 1).unwrap();
        assert_eq!(t.links.series_count(), a.n_links());
        assert_eq!(t.links.len(), 300);
        let f = cfg.factors(&a, &t, 1).unwrap();
        assert_eq!((f.n_flows(), f.p()), (a.n_routes(), 2));
        let an = cfg.anomaly_config(&a, &t).unwrap();
        assert_eq!(an.route, a.route_index("Kansas City", "Atlanta").unwrap());
        assert_eq!(an.onset, 150);
        let mu = t.flow_means.as_ref().unwrap()[(an.route, 150)];
        assert!((an.shift - 5.0 * 1.5 * mu.powf(0.75)).abs() < 1e-9 * an.shift);
    }
}
