//! Fractional Gaussian noise via circulant embedding of its autocovariance.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FgnSpec {
    pub hurst: f64,
    pub sigma2: f64,
    pub length: usize,
}

impl FgnSpec {
    pub fn new(hurst: f64, sigma2: f64, length: usize) -> Result<Self> {
        let spec = Self {
            hurst,
            sigma2,
            length,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hurst > 0.0 && self.hurst < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "Hurst parameter must lie in (0,1), got {}",
                self.hurst
            )));
        }
        if !(self.sigma2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "fGn variance must be positive, got {}",
                self.sigma2
            )));
        }
        if self.length == 0 {
            return Err(Error::InvalidParameter("fGn length must be at least 1".into()));
        }
        Ok(())
    }
}

/// `γ_H(k) = (σ²/2)(|k+1|^{2H} + |k−1|^{2H} − 2k^{2H})`.
pub fn fgn_autocovariance(hurst: f64, sigma2: f64, lag: usize) -> f64 {
    if lag == 0 {
        return sigma2;
    }
    let k = lag as f64;
    let h2 = 2.0 * hurst;
    0.5 * sigma2 * ((k + 1.0).powf(h2) + (k - 1.0).abs().powf(h2) - 2.0 * k.powf(h2))
}

/// Autocorrelation `ρ(i)` of fGn for lags `0..n`.
pub fn fgn_autocorrelation(hurst: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| fgn_autocovariance(hurst, 1.0, k)).collect()
}

/// Precomputed circulant embedding for a fixed spec; sampling many series
/// with the same spec reuses the eigenvalues and FFT plan.
pub struct FgnGenerator {
    spec: FgnSpec,
    scale: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FgnGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FgnGenerator").field("spec", &self.spec).finish()
    }
}

impl FgnGenerator {
    pub fn new(spec: FgnSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.length;
        let m = 2 * n;
        // first row of the circulant: c_0..c_n, c_{n-1}..c_1
        let mut row: Vec<Complex<f64>> = (0..m)
            .map(|i| {
                let lag = if i <= n { i } else { m - i };
                Complex::new(fgn_autocovariance(spec.hurst, spec.sigma2, lag), 0.0)
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(m);
        fft.process(&mut row);
        let max = row.iter().map(|c| c.re).fold(0.0, f64::max);
        let mut scale = Vec::with_capacity(m);
        for (index, c) in row.iter().enumerate() {
            let mut ev = c.re;
            if ev < 0.0 {
                if ev < -1e-10 * max.max(1e-300) {
                    return Err(Error::NegativeEigenvalue { index, value: ev });
                }
                ev = 0.0;
            }
            scale.push((ev / m as f64).sqrt());
        }
        Ok(Self { spec, scale, fft })
    }

    pub fn spec(&self) -> &FgnSpec {
        &self.spec
    }

    /// Two independent series with the fGn covariance (real and imaginary
    /// parts of one embedded draw).
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let mut buf: Vec<Complex<f64>> = self
            .scale
            .iter()
            .map(|&s| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex::new(s * re, s * im)
            })
            .collect();
        self.fft.process(&mut buf);
        let n = self.spec.length;
        let re = buf[..n].iter().map(|c| c.re).collect();
        let im = buf[..n].iter().map(|c| c.im).collect();
        (re, im)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.sample_pair(rng).0
    }
}

/// Zero-mean fGn series, deterministic in `seed`.
pub fn generate_fgn(spec: FgnSpec, seed: u64) -> Result<Vec<f64>> {
    let gen = FgnGenerator::new(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(gen.sample(&mut rng))
}

/// Independent RNG stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn autocovariance_closed_form() {
        assert_eq!(fgn_autocovariance(0.5, 1.0, 3), 0.0);
        assert_eq!(fgn_autocovariance(0.73, 2.5, 0), 2.5);
        let expected = (2f64.powf(1.6) - 2.0) / 2.0;
        assert!((fgn_autocovariance(0.8, 1.0, 1) - expected).abs() < 1e-15);
    }

    #[test]
    fn same_seed_same_series() {
        let spec = FgnSpec::new(0.7, 1.0, 1000).unwrap();
        assert_eq!(generate_fgn(spec, 11).unwrap(), generate_fgn(spec, 11).unwrap());
        assert_ne!(generate_fgn(spec, 11).unwrap(), generate_fgn(spec, 12).unwrap());
    }

    #[test]
    fn invalid_specs() {
        assert!(FgnSpec::new(1.0, 1.0, 10).is_err());
        assert!(FgnSpec::new(0.0, 1.0, 10).is_err());
        assert!(FgnSpec::new(0.5, 0.0, 10).is_err());
        assert!(FgnSpec::new(0.5, 1.0, 0).is_err());
    }

    #[test]
    fn length_one_has_variance_sigma2() {
        let spec = FgnSpec::new(0.9, 4.0, 1).unwrap();
        let gen = FgnGenerator::new(spec).unwrap();
        let mut rng = stream_rng(3, 0);
        let n = 20_000;
        let mean_sq: f64 = (0..n).map(|_| gen.sample(&mut rng)[0].powi(2)).sum::<f64>() / n as f64;
        assert!((mean_sq - 4.0).abs() < 0.2, "{mean_sq}");
    }

    #[test]
    fn white_noise_lag_one_correlation() {
        let n = 100_000;
        let x = generate_fgn(FgnSpec::new(0.5, 1.0, n).unwrap(), 5).unwrap();
        let mean = x.iter().sum::<f64>() / n as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let c1 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / n as f64;
        let r1 = c1 / var;
        // MC standard error of r1 under independence is 1/sqrt(n)
        assert!(r1.abs() < 3.0 / (n as f64).sqrt(), "r1 = {r1}");
    }
}
