//! Experiment driver: scenario runs for the three predictors, calibration
//! sweeps, the misspecification study and anomaly detection.

pub mod anomaly;
pub mod calibration;
pub mod misspec;
pub mod report;
pub mod synthetic;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::joint::{fit_from_moments, plug_in_predict, window_covariance, ybar, ModelConfig};
use crate::kriging::{
    estimate_sigma_x, ordinary_from_weights, ordinary_weights, simple_krige, windowed_moments,
    KrigingPrediction,
};
use crate::mean_model::FactorMatrix;
use crate::topology::{partition, ObservationScenario, RoutingMatrix};
use crate::trace::TraceSet;

/// `Σ_t ‖Ŷ(t) − Y(t)‖² / Σ_t ‖Y(t)‖²`.
pub fn remse(predicted: &DMatrix<f64>, actual: &DMatrix<f64>) -> Result<f64> {
    if predicted.shape() != actual.shape() {
        return Err(Error::Dimension {
            context: "remse",
            expected: actual.len(),
            actual: predicted.len(),
        });
    }
    let denom = actual.norm_squared();
    if denom == 0.0 {
        return Err(Error::ZeroDenominator("remse"));
    }
    Ok((predicted - actual).norm_squared() / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Simple,
    Ordinary,
    NetworkSpecific,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Simple, Method::Ordinary, Method::NetworkSpecific];

    pub fn name(self) -> &'static str {
        match self {
            Method::Simple => "simple",
            Method::Ordinary => "ordinary",
            Method::NetworkSpecific => "network",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simple" => Ok(Method::Simple),
            "ordinary" => Ok(Method::Ordinary),
            "network" | "network-specific" => Ok(Method::NetworkSpecific),
            other => Err(Error::InvalidParameter(format!(
                "unknown method `{other}` (expected simple, ordinary or network)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Evaluate every `stride`-th bin after warm-up.
    pub stride: usize,
    /// First evaluated bin; defaults to the window length `m`.
    pub start: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            stride: 1,
            start: None,
        }
    }
}

/// Predictions of the unobserved links at every evaluated bin.
#[derive(Debug, Clone)]
pub struct PredictionRun {
    pub method: Method,
    pub scenario: ObservationScenario,
    pub config: ModelConfig,
    pub times: Vec<usize>,
    /// `|U| × times.len()`
    pub predicted: DMatrix<f64>,
    pub actual: DMatrix<f64>,
    /// Diagonal of the predicted error covariance at each bin.
    pub error_variance: DMatrix<f64>,
    pub remse: f64,
    /// Bins where a pseudo-inverse was needed.
    pub pseudo_inverse_bins: usize,
}

impl PredictionRun {
    pub fn residuals(&self, k: usize) -> Vec<f64> {
        (&self.actual.row(k) - &self.predicted.row(k)).iter().copied().collect()
    }

    pub fn mse(&self) -> f64 {
        (&self.predicted - &self.actual).norm_squared() / self.predicted.len() as f64
    }
}

/// Walks `t0` over every evaluated bin after warm-up and predicts the
/// unobserved links of `s` with `method`.
pub fn run_scenario(
    links: &TraceSet,
    a: &RoutingMatrix,
    s: &ObservationScenario,
    method: Method,
    config: &ModelConfig,
    factors: Option<&FactorMatrix>,
    opts: &RunOptions,
) -> Result<PredictionRun> {
    config.validate()?;
    if links.series_count() != a.n_links() {
        return Err(Error::Dimension {
            context: "link trace series vs routing matrix rows",
            expected: a.n_links(),
            actual: links.series_count(),
        });
    }
    if opts.stride == 0 {
        return Err(Error::InvalidParameter("stride must be at least 1".into()));
    }
    let m = config.window;
    let start = opts.start.unwrap_or(m).max(m);
    if start >= links.len() {
        return Err(Error::InsufficientHistory {
            needed: start + 1,
            available: links.len(),
            t0: start,
        });
    }
    let times: Vec<usize> = (start..links.len()).step_by(opts.stride).collect();
    let (a_o, _) = partition(a, s)?;
    let y = links.values();
    let y_o = y.select_rows(s.observed_rows().iter());
    let y_u = y.select_rows(s.unobserved_rows().iter());

    let predict: Box<dyn Fn(usize) -> Result<KrigingPrediction> + Sync> = match method {
        Method::Simple => {
            if m < 2 {
                return Err(Error::InvalidParameter("simple kriging needs m >= 2".into()));
            }
            Box::new(|t0| {
                let moments = windowed_moments(links, t0, m)?;
                simple_krige(&moments, &y_o.column(t0).into_owned(), s, true)
            })
        }
        Method::Ordinary => {
            let w = ordinary_weights(a, s)?;
            let a_o = a_o.clone();
            let y_o = &y_o;
            Box::new(move |t0| {
                let cov = window_covariance(y_o, t0 - 1, m)?;
                let sx = estimate_sigma_x(&cov, &a_o)?;
                let sx = if sx > 0.0 { sx } else { f64::MIN_POSITIVE };
                Ok(ordinary_from_weights(a, s, &w, sx, &y_o.column(t0).into_owned()))
            })
        }
        Method::NetworkSpecific => {
            let factors = factors.ok_or_else(|| {
                Error::InvalidParameter("network-specific method needs a factor matrix".into())
            })?;
            let factors = match factors.p().cmp(&config.p) {
                std::cmp::Ordering::Less => {
                    return Err(Error::InvalidParameter(format!(
                        "factor matrix has {} columns but p = {}",
                        factors.p(),
                        config.p
                    )))
                }
                std::cmp::Ordering::Equal => factors.clone(),
                std::cmp::Ordering::Greater => factors.truncate(config.p)?,
            };
            let a_o = a_o.clone();
            let y_o = &y_o;
            Box::new(move |t0| {
                let yb = ybar(y_o, t0, m)?;
                let cov = window_covariance(y_o, t0, m)?;
                let fit = fit_from_moments(&yb, &cov, &a_o, a, s, &factors, config)?;
                let mut pred = plug_in_predict(&fit, &y_o.column(t0).into_owned())?;
                pred.used_pseudoinverse |= fit.beta.used_pseudoinverse;
                Ok(pred)
            })
        }
    };

    let preds: Vec<KrigingPrediction> = times
        .par_iter()
        .map(|&t0| predict(t0))
        .collect::<Result<_>>()?;
    let n_u = s.unobserved().len();
    let mut predicted = DMatrix::zeros(n_u, times.len());
    let mut error_variance = DMatrix::zeros(n_u, times.len());
    let mut pseudo_inverse_bins = 0;
    for (k, p) in preds.iter().enumerate() {
        predicted.set_column(k, &p.predicted);
        error_variance.set_column(k, &p.error_variances());
        pseudo_inverse_bins += usize::from(p.used_pseudoinverse);
    }
    let actual = y_u.select_columns(times.iter());
    let remse = remse(&predicted, &actual)?;
    Ok(PredictionRun {
        method,
        scenario: s.clone(),
        config: *config,
        times,
        predicted,
        actual,
        error_variance,
        remse,
        pseudo_inverse_bins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mean_model::{fit_factor_matrix, window_means};
    use crate::sim::synthesize_flows;
    use crate::topology::route_traffic;
    use crate::trace::TraceKind;

    #[test]
    fn remse_cases() {
        let y = DMatrix::from_row_slice(2, 3, &[3.0, 3.0, 3.0, 4.0, 4.0, 4.0]);
        assert_eq!(remse(&y, &y).unwrap(), 0.0);
        assert_eq!(remse(&DMatrix::zeros(2, 3), &y).unwrap(), 1.0);
        let p = DMatrix::from_row_slice(2, 3, &[3.0, 3.0, 3.0, 0.0, 0.0, 0.0]);
        assert!((remse(&p, &y).unwrap() - 16.0 / 25.0).abs() < 1e-15);
        assert!(remse(&y, &DMatrix::zeros(2, 3)).is_err());
        assert!(remse(&y, &DMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("kriging".parse::<Method>().is_err());
    }

    fn dup_network() -> (RoutingMatrix, ObservationScenario, TraceSet) {
        // link 3 duplicates link 1
        let a = RoutingMatrix::from_rows(&[&[1, 1, 0], &[0, 1, 1], &[1, 1, 0]]).unwrap();
        let s = ObservationScenario::new(vec![1, 2], vec![3]).unwrap();
        let flows = synthesize_flows(&[50.0, 80.0, 120.0], 0.7, 1.5, 0.75, 300, 3).unwrap();
        let links = route_traffic(&a, &flows).unwrap();
        (a, s, links)
    }

    #[test]
    fn duplicate_target_is_exact_for_all_methods() {
        let (a, s, links) = dup_network();
        let cfg = ModelConfig { p: 1, window: 30, ..Default::default() };
        let flows_f = FactorMatrix::from_basis(DMatrix::from_element(3, 1, 1.0 / 3f64.sqrt()), None).unwrap();
        for method in Method::ALL {
            let run = run_scenario(&links, &a, &s, method, &cfg, Some(&flows_f), &RunOptions::default()).unwrap();
            assert!(run.remse < 1e-12, "{method}: {}", run.remse);
            assert_eq!(run.times.first(), Some(&30));
            assert_eq!(run.predicted.ncols(), 270);
        }
    }

    #[test]
    fn stride_and_start() {
        let (a, s, links) = dup_network();
        let cfg = ModelConfig { p: 1, window: 10, ..Default::default() };
        let opts = RunOptions { stride: 7, start: Some(50) };
        let run = run_scenario(&links, &a, &s, Method::Simple, &cfg, None, &opts).unwrap();
        assert_eq!(run.times[..3], [50, 57, 64]);
        assert!(run_scenario(&links, &a, &s, Method::NetworkSpecific, &cfg, None, &opts).is_err());
    }

    #[test]
    fn network_prediction_ignores_sigma() {
        let a = RoutingMatrix::from_rows(&[&[1, 1, 0, 1], &[0, 1, 1, 0], &[1, 0, 1, 1], &[0, 0, 1, 1]]).unwrap();
        let s = ObservationScenario::new(vec![1, 2, 4], vec![3]).unwrap();
        let flows = synthesize_flows(&[50.0, 80.0, 120.0, 30.0], 0.8, 1.5, 0.75, 400, 8).unwrap();
        let links = route_traffic(&a, &flows).unwrap();
        let f = fit_factor_matrix(&window_means(&flows, 50).unwrap(), 2).unwrap();
        let cfg = ModelConfig { window: 40, ..Default::default() };
        let run = run_scenario(&links, &a, &s, Method::NetworkSpecific, &cfg, Some(&f), &RunOptions::default()).unwrap();
        // refit one bin by hand with a different σ̂²
        let (a_o, _) = partition(&a, &s).unwrap();
        let y_o = links.values().select_rows(s.observed_rows().iter());
        let t0 = 123;
        let yb = ybar(&y_o, t0, 40).unwrap();
        let mut fit = fit_from_moments(&yb, &window_covariance(&y_o, t0, 40).unwrap(), &a_o, &a, &s, &f, &cfg).unwrap();
        fit.sigma2_hat = 42.0;
        let p = plug_in_predict(&fit, &y_o.column(t0).into_owned()).unwrap();
        assert_eq!(p.predicted[0], run.predicted[(0, t0 - 40)]);
        assert!(run.remse.is_finite());
    }

    #[test]
    fn rejects_mismatched_trace() {
        let (a, s, _) = dup_network();
        let bad = TraceSet::from_series(&[vec![1.0; 50], vec![1.0; 50]], TraceKind::Link).unwrap();
        let cfg = ModelConfig::default();
        assert!(run_scenario(&bad, &a, &s, Method::Simple, &cfg, None, &RunOptions::default()).is_err());
    }
}
