//! Hurst parameter from the Haar-wavelet logscale diagram.

use statrs::function::gamma::digamma;

use crate::error::{Error, Result};

pub const MIN_HURST_LENGTH: usize = 256;
const H_MIN: f64 = 0.01;
const H_MAX: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HurstEstimate {
    pub hurst: f64,
    /// Set when the raw estimate fell outside `(0.01, 0.99)`.
    pub clamped: bool,
}

/// Mean squared orthonormal Haar detail coefficient and count at each
/// octave `j = 1, 2, …`.
pub fn haar_energies(series: &[f64]) -> Vec<(f64, usize)> {
    let mut approx = series.to_vec();
    let mut out = Vec::new();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    while approx.len() >= 2 {
        let n = approx.len() / 2;
        let mut next = Vec::with_capacity(n);
        let mut energy = 0.0;
        for k in 0..n {
            let (x, y) = (approx[2 * k], approx[2 * k + 1]);
            let d = (x - y) * s;
            energy += d * d;
            next.push((x + y) * s);
        }
        out.push((energy / n as f64, n));
        approx = next;
    }
    out
}

/// Weighted regression of `log₂ μ_j` (bias-corrected) on `j` over
/// octaves `3 ..= ⌊log₂ n⌋ − 3`, weights `n_j`; `Ĥ = (slope + 1)/2`.
pub fn estimate_hurst(series: &[f64]) -> Result<HurstEstimate> {
    let n = series.len();
    if n < MIN_HURST_LENGTH {
        return Err(Error::InvalidParameter(format!(
            "Hurst estimation needs at least {MIN_HURST_LENGTH} samples, got {n}"
        )));
    }
    let top = (n as f64).log2().floor() as usize - 3;
    let energies = haar_energies(series);
    let ln2 = std::f64::consts::LN_2;
    let points: Vec<(f64, f64, f64)> = (3..=top)
        .map(|j| {
            let (mu, nj) = energies[j - 1];
            let half = nj as f64 / 2.0;
            let bias = digamma(half) / ln2 - half.log2();
            (j as f64, mu.log2() - bias, nj as f64)
        })
        .collect();
    if points.iter().any(|p| !p.1.is_finite()) {
        return Err(Error::InvalidParameter(
            "series has zero wavelet energy at some scale".into(),
        ));
    }
    let sw: f64 = points.iter().map(|p| p.2).sum();
    let mx = points.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = points.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxy: f64 = points.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let raw = (sxy / sxx + 1.0) / 2.0;
    let clamped = !(raw > H_MIN && raw < H_MAX);
    Ok(HurstEstimate {
        hurst: if clamped { raw.clamp(H_MIN, H_MAX) } else { raw },
        clamped,
    })
}
