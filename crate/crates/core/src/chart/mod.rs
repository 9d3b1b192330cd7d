//! EWMA control charts with limits corrected for long-range dependence.

mod hurst;
mod quad;

use std::f64::consts::PI;
use std::io::Write;

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

pub use hurst::{estimate_hurst, haar_energies, HurstEstimate, MIN_HURST_LENGTH};
pub use quad::{integrate, QuadResult};

pub const DEFAULT_LAMBDA: f64 = 0.1;
pub const DEFAULT_LIMIT_MULTIPLIER: f64 = 3.0;
pub const DEFAULT_QUAD_TOL: f64 = 1e-8;

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("lambda must lie in (0,1], got {lambda}")))
    }
}

fn check_hurst(hurst: f64) -> Result<()> {
    if hurst > 0.0 && hurst < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("Hurst parameter must lie in (0,1), got {hurst}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EwmaState {
    lambda: f64,
    current: f64,
    initialized: bool,
}

impl EwmaState {
    /// Fresh state with `Z̃₀ = 0`.
    pub fn new(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self {
            lambda,
            current: 0.0,
            initialized: true,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn current(&self) -> f64 {
        self.current
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }
}

/// `Z̃_t = λ Z_t + (1 − λ) Z̃_{t−1}`.
pub fn ewma_update(state: EwmaState, z: f64) -> EwmaState {
    EwmaState {
        current: state.lambda * z + (1.0 - state.lambda) * state.current,
        ..state
    }
}

/// `λ/(2 − λ) · σ²`.
pub fn iid_ewma_variance(lambda: f64, sigma2: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(lambda / (2.0 - lambda) * sigma2)
}

/// `C₂(H)² = π / (H Γ(2H) sin(Hπ))`.
pub fn c2_squared(hurst: f64) -> f64 {
    PI / (hurst * gamma(2.0 * hurst) * (hurst * PI).sin())
}

const FOLD_TERMS: usize = 50;

/// `Σ_{k∈ℤ} |θ + 2πk|^{−s}` for `θ ∈ (0, π]`: explicit terms up to
/// `FOLD_TERMS`, Euler–Maclaurin beyond.
fn folded_power(theta: f64, s: f64) -> f64 {
    let tp = 2.0 * PI;
    let mut sum = theta.powf(-s);
    for k in 1..=FOLD_TERMS {
        let c = tp * k as f64;
        sum += (c + theta).powf(-s) + (c - theta).powf(-s);
    }
    let kk = tp * FOLD_TERMS as f64;
    let (p, m) = (kk + theta, kk - theta);
    let integral = (p.powf(1.0 - s) + m.powf(1.0 - s)) / (tp * (s - 1.0));
    let f_k = p.powf(-s) + m.powf(-s);
    let df_k = -tp * s * (p.powf(-s - 1.0) + m.powf(-s - 1.0));
    let d3f_k = -tp.powi(3) * s * (s + 1.0) * (s + 2.0) * (p.powf(-s - 3.0) + m.powf(-s - 3.0));
    sum + integral - f_k / 2.0 - df_k / 12.0 + d3f_k / 720.0
}

fn folded_tail_bound(s: f64) -> f64 {
    let tp = 2.0 * PI;
    let m = tp * FOLD_TERMS as f64 - PI;
    2.0 * tp.powi(5) * s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * m.powf(-s - 5.0) / 30240.0
}

/// Variance of the EWMA of fGn with Hurst parameter `hurst` and marginal
/// variance `sigma2`, by numerical integration of its spectral form.
pub fn lrd_ewma_variance(lambda: f64, sigma2: f64, hurst: f64, rel_tol: f64) -> Result<f64> {
    check_lambda(lambda)?;
    check_hurst(hurst)?;
    if !(rel_tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {rel_tol}")));
    }
    let s = 2.0 * hurst + 1.0;
    let a = 2.0 - 2.0 * hurst;
    let l2 = lambda * lambda;
    let ratio = |theta: f64| {
        let u = 2.0 * (theta / 2.0).sin().powi(2);
        2.0 * u / (l2 + 2.0 * (1.0 - lambda) * u)
    };
    // θ = π v^{1/a} absorbs the θ^{1−2H} behaviour at the origin
    let integrand = |v: f64| {
        if v <= 0.0 {
            return 0.0;
        }
        let theta = PI * v.powf(1.0 / a);
        let jac = PI / a * v.powf(1.0 / a - 1.0);
        ratio(theta) * folded_power(theta, s) * jac
    };
    let q = integrate(integrand, 0.0, 1.0, rel_tol / 4.0, 0.0, 4000);
    let gmax = 4.0 / (l2 + 4.0 * (1.0 - lambda));
    let tail_err = PI * gmax * folded_tail_bound(s);
    let scale = 2.0 * l2 * sigma2 / c2_squared(hurst);
    let estimate = scale * q.value;
    let error_bound = scale * (q.error + tail_err);
    if !q.converged || !estimate.is_finite() || error_bound > rel_tol * estimate.abs() {
        return Err(Error::Quadrature {
            estimate,
            error_bound,
        });
    }
    Ok(estimate)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartConfig {
    pub lambda: f64,
    pub sigma2: f64,
    pub hurst: f64,
    pub limit_multiplier: f64,
    pub lrd_adjusted: bool,
}

impl ChartConfig {
    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        check_hurst(self.hurst)?;
        if !(self.sigma2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "residual variance must be positive, got {}",
                self.sigma2
            )));
        }
        if !(self.limit_multiplier > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "limit multiplier must be positive, got {}",
                self.limit_multiplier
            )));
        }
        Ok(())
    }

    /// Variance of the chart statistic under the in-control model.
    pub fn statistic_variance(&self) -> Result<f64> {
        if self.lrd_adjusted {
            lrd_ewma_variance(self.lambda, self.sigma2, self.hurst, DEFAULT_QUAD_TOL)
        } else {
            iid_ewma_variance(self.lambda, self.sigma2)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartResult {
    pub statistic: Vec<f64>,
    /// Symmetric control limit; the band is `±limit`.
    pub limit: f64,
    pub alarms: Vec<bool>,
    pub onset_marker: Option<usize>,
}

impl ChartResult {
    pub fn upper_limit(&self) -> f64 {
        self.limit
    }

    pub fn lower_limit(&self) -> f64 {
        -self.limit
    }

    /// Fraction of alarming bins in `range`.
    pub fn alarm_rate(&self, range: std::ops::Range<usize>) -> f64 {
        let slice = &self.alarms[range];
        if slice.is_empty() {
            return 0.0;
        }
        slice.iter().filter(|&&a| a).count() as f64 / slice.len() as f64
    }

    /// Writes `time,statistic,limit,alarm` rows.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "time,statistic,limit,alarm")?;
        for (t, (z, a)) in self.statistic.iter().zip(&self.alarms).enumerate() {
            writeln!(out, "{t},{z:e},{:e},{}", self.limit, u8::from(*a))?;
        }
        Ok(())
    }
}

/// EWMA of `residuals` from `Z̃₀ = 0` against limits `±c·σ_Z̃`.
pub fn run_chart(residuals: &[f64], config: &ChartConfig) -> Result<ChartResult> {
    config.validate()?;
    let limit = config.limit_multiplier * config.statistic_variance()?.sqrt();
    let mut state = EwmaState::new(config.lambda)?;
    let statistic: Vec<f64> = residuals
        .iter()
        .map(|&z| {
            state = ewma_update(state, z);
            state.current()
        })
        .collect();
    let alarms = statistic.iter().map(|z| z.abs() > limit).collect();
    Ok(ChartResult {
        statistic,
        limit,
        alarms,
        onset_marker: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ewma_recursion() {
        let mut s = EwmaState::new(0.1).unwrap();
        let mut out = Vec::new();
        for z in [1.0, 0.0, 0.0] {
            s = ewma_update(s, z);
            out.push(s.current());
        }
        for (got, want) in out.iter().zip([0.1, 0.09, 0.081]) {
            assert!((got - want).abs() < 1e-15);
        }
        let s = ewma_update(EwmaState::new(1.0).unwrap(), 4.2);
        assert_eq!(s.current(), 4.2);
        assert!(EwmaState::new(0.0).is_err());
    }

    #[test]
    fn ewma_converges_to_constant() {
        let mut s = EwmaState::new(0.3).unwrap();
        let mut prev_gap = f64::INFINITY;
        for _ in 0..100 {
            s = ewma_update(s, 5.0);
            let gap = (5.0 - s.current()).abs();
            assert!(gap < prev_gap || gap == 0.0);
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-12);
    }

    #[test]
    fn iid_variance() {
        assert_eq!(iid_ewma_variance(1.0, 2.5).unwrap(), 2.5);
        assert!((iid_ewma_variance(0.2, 1.0).unwrap() - 1.0 / 9.0).abs() < 1e-15);
        let mut prev = 0.0;
        for i in 1..=20 {
            let v = iid_ewma_variance(i as f64 / 20.0, 1.0).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn c2_at_half_is_two_pi() {
        assert!((c2_squared(0.5) - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn folded_power_white_case() {
        // Σ_k (θ+2πk)^{-2} = 1/(4 sin²(θ/2))
        for theta in [0.01, 0.5, 2.0, PI] {
            let want = 1.0 / (4.0 * (theta / 2.0).sin().powi(2));
            assert!((folded_power(theta, 2.0) - want).abs() < 1e-12 * want);
        }
    }

    #[test]
    fn lrd_reduces_to_iid_at_half() {
        for lambda in [0.05, 0.1, 0.2, 0.3, 0.5, 1.0] {
            let lrd = lrd_ewma_variance(lambda, 1.0, 0.5, 1e-8).unwrap();
            let iid = iid_ewma_variance(lambda, 1.0).unwrap();
            assert!((lrd - iid).abs() < 1e-6 * iid, "lambda {lambda}: {lrd} vs {iid}");
        }
    }

    #[test]
    fn lrd_lambda_one_is_sigma2() {
        for h in [0.1, 0.3, 0.7, 0.8, 0.95] {
            let v = lrd_ewma_variance(1.0, 2.0, h, 1e-8).unwrap();
            assert!((v - 2.0).abs() < 1e-6 * 2.0, "H {h}: {v}");
        }
    }

    #[test]
    fn lrd_matches_autocovariance_series() {
        // Var = λ² Σ_{j,k} φ^{j+k} γ(j−k), summed directly
        use crate::sim::fgn_autocovariance;
        for (lambda, h) in [(0.3, 0.8), (0.5, 0.3), (0.2, 0.65)] {
            let phi: f64 = 1.0 - lambda;
            let n = 400;
            let mut direct = fgn_autocovariance(h, 1.0, 0) / (1.0 - phi * phi);
            for d in 1..n {
                direct += 2.0 * phi.powi(d as i32) * fgn_autocovariance(h, 1.0, d) / (1.0 - phi * phi);
            }
            direct *= lambda * lambda;
            let v = lrd_ewma_variance(lambda, 1.0, h, 1e-9).unwrap();
            assert!((v - direct).abs() < 1e-6 * direct, "({lambda},{h}): {v} vs {direct}");
        }
    }

    #[test]
    fn lrd_inflates_variance_for_positive_dependence() {
        for lambda in [0.05, 0.1, 0.3, 0.7] {
            for h in [0.6, 0.75, 0.9] {
                let lrd = lrd_ewma_variance(lambda, 1.0, h, 1e-8).unwrap();
                assert!(lrd >= iid_ewma_variance(lambda, 1.0).unwrap());
                assert!(lrd.is_finite() && lrd > 0.0);
            }
        }
    }

    #[test]
    fn lrd_rejects_bad_input() {
        assert!(lrd_ewma_variance(0.1, 1.0, 1.0, 1e-8).is_err());
        assert!(lrd_ewma_variance(0.0, 1.0, 0.5, 1e-8).is_err());
        assert!(lrd_ewma_variance(0.1, 1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn chart_basics() {
        let cfg = ChartConfig {
            lambda: 0.1,
            sigma2: 1.0,
            hurst: 0.8,
            limit_multiplier: 3.0,
            lrd_adjusted: true,
        };
        let r = run_chart(&[0.0; 50], &cfg).unwrap();
        assert!(r.alarms.iter().all(|a| !a));
        let r = run_chart(&[100.0; 5], &cfg).unwrap();
        for (z, a) in r.statistic.iter().zip(&r.alarms) {
            assert_eq!(*a, z.abs() > r.limit);
        }
        assert_eq!(r.lower_limit(), -r.upper_limit());
        assert!(run_chart(&[0.0], &ChartConfig { sigma2: 0.0, ..cfg }).is_err());
    }

    #[test]
    fn chart_file_layout() {
        let r = ChartResult {
            statistic: vec![0.5, -2.0],
            limit: 1.0,
            alarms: vec![false, true],
            onset_marker: None,
        };
        let mut buf = Vec::new();
        r.write(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "time,statistic,limit,alarm");
        assert_eq!(lines[2], "1,-2e0,1e0,1");
    }
}
