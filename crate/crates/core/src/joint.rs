//! The network-specific model: flow means `Fβ`, flow variances
//! `σ²|Fβ|^{2γ}`, iterated GLS for `β` and plug-in kriging.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kriging::{krige_blocks, KrigingPrediction};
use crate::linalg::{frobenius_dot, invert, symmetrize, Inverse};
use crate::mean_model::FactorMatrix;
use crate::topology::{partition, ObservationScenario, RoutingMatrix};
use crate::trace::TraceSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub p: usize,
    pub gamma: f64,
    pub window: usize,
    pub convergence_eps: f64,
    pub min_iterations: usize,
    pub max_iterations: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            p: 2,
            gamma: 0.75,
            window: 60,
            convergence_eps: 1e-3,
            min_iterations: 20,
            max_iterations: 200,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.p == 0 {
            return bad("p must be at least 1".into());
        }
        if !(self.gamma > 0.0) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if self.window == 0 {
            return bad("window m must be at least 1".into());
        }
        if !(self.convergence_eps > 0.0) {
            return bad(format!("convergence eps must be positive, got {}", self.convergence_eps));
        }
        if self.min_iterations > self.max_iterations || self.max_iterations == 0 {
            return bad(format!(
                "need 1 <= max iterations and min <= max (got {} / {})",
                self.min_iterations, self.max_iterations
            ));
        }
        Ok(())
    }
}

/// Average of columns `t0−m+1 ..= t0` (the window ends at and includes `t0`).
pub fn ybar(values: &DMatrix<f64>, t0: usize, m: usize) -> Result<DVector<f64>> {
    if m == 0 {
        return Err(Error::InvalidParameter("window m must be at least 1".into()));
    }
    if t0 >= values.ncols() || t0 + 1 < m {
        return Err(Error::InsufficientHistory {
            needed: m,
            available: (t0 + 1).min(values.ncols()),
            t0,
        });
    }
    Ok(values.columns(t0 + 1 - m, m).column_sum() / m as f64)
}

/// Sample covariance (divisor `m − 1`) of the same window as [`ybar`].
pub fn window_covariance(values: &DMatrix<f64>, t0: usize, m: usize) -> Result<DMatrix<f64>> {
    let mean = ybar(values, t0, m)?;
    let n = values.nrows();
    let mut cov = DMatrix::zeros(n, n);
    if m < 2 {
        return Ok(cov);
    }
    for col in values.columns(t0 + 1 - m, m).column_iter() {
        let d = col - &mean;
        cov.ger(1.0, &d, &d, 1.0);
    }
    Ok(symmetrize(&(cov / (m - 1) as f64)))
}

/// `Fβ` must be positive on every flow crossing an observed link.
fn require_positive(mu: &DVector<f64>, a_o: &DMatrix<f64>) -> Result<()> {
    let flows: Vec<usize> = mu
        .iter()
        .enumerate()
        .filter(|&(j, &v)| !(v > 0.0) && a_o.column(j).iter().any(|&x| x != 0.0))
        .map(|(j, _)| j + 1)
        .collect();
    if flows.is_empty() {
        Ok(())
    } else {
        Err(Error::NonPositiveMean { flows })
    }
}

/// `|Fβ|^{2γ}`.
fn flow_weights(
    beta: &DVector<f64>,
    f: &DMatrix<f64>,
    gamma: f64,
    a_o: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    if f.ncols() != beta.len() {
        return Err(Error::Dimension {
            context: "beta length vs factor count",
            expected: f.ncols(),
            actual: beta.len(),
        });
    }
    if a_o.ncols() != f.nrows() {
        return Err(Error::Dimension {
            context: "A_o columns vs factor rows",
            expected: f.nrows(),
            actual: a_o.ncols(),
        });
    }
    let mu = f * beta;
    require_positive(&mu, a_o)?;
    Ok(mu.map(|v| v.abs().powf(2.0 * gamma)))
}

fn weighted_gram(a: &DMatrix<f64>, w: &DVector<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut aw = a.clone();
    for (mut col, &wj) in aw.column_iter_mut().zip(w.iter()) {
        col *= wj;
    }
    aw * b.transpose()
}

/// `[A_o diag(|Fβ|^{2γ}) A_oᵗ]⁻¹`; requires `Fβ > 0`.
pub fn g_matrix(
    beta: &DVector<f64>,
    f: &DMatrix<f64>,
    a_o: &DMatrix<f64>,
    gamma: f64,
) -> Result<Inverse> {
    let w = flow_weights(beta, f, gamma, a_o)?;
    Ok(invert(&symmetrize(&weighted_gram(a_o, &w, a_o))))
}

/// Iterated GLS result.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaEstimate {
    pub beta: DVector<f64>,
    pub iterations_run: usize,
    pub converged: bool,
    pub used_pseudoinverse: bool,
}

/// `β̂₁ = [(A_oF)ᵗA_oF]⁻¹(A_oF)ᵗȲ_o`; the flag reports a pseudo-inverse.
pub fn ols_estimate(
    ybar_o: &DVector<f64>,
    a_o: &DMatrix<f64>,
    f: &DMatrix<f64>,
) -> Result<(DVector<f64>, bool)> {
    if ybar_o.len() != a_o.nrows() {
        return Err(Error::Dimension {
            context: "observed mean vs A_o rows",
            expected: a_o.nrows(),
            actual: ybar_o.len(),
        });
    }
    let x = a_o * f;
    let inv = invert(&(x.transpose() * &x));
    Ok((&inv.matrix * (x.transpose() * ybar_o), inv.pseudo))
}

/// One GLS update `[(A_oF)ᵗG(β)A_oF]⁻¹(A_oF)ᵗG(β)Ȳ_o`.
pub fn gls_step(
    beta: &DVector<f64>,
    ybar_o: &DVector<f64>,
    a_o: &DMatrix<f64>,
    f: &DMatrix<f64>,
    gamma: f64,
) -> Result<(DVector<f64>, bool)> {
    let g = g_matrix(beta, f, a_o, gamma)?;
    let x = a_o * f;
    let xtg = x.transpose() * &g.matrix;
    let inv = invert(&symmetrize(&(&xtg * &x)));
    Ok((&inv.matrix * (xtg * ybar_o), g.pseudo || inv.pseudo))
}

pub fn igls_estimate(
    ybar_o: &DVector<f64>,
    a_o: &DMatrix<f64>,
    f: &DMatrix<f64>,
    gamma: f64,
    config: &ModelConfig,
) -> Result<BetaEstimate> {
    config.validate()?;
    let (mut beta, mut pseudo) = ols_estimate(ybar_o, a_o, f)?;
    let mut iterations_run = 1;
    let mut converged = false;
    while iterations_run < config.max_iterations {
        let (next, p) = gls_step(&beta, ybar_o, a_o, f, gamma)?;
        pseudo |= p;
        let step = (&next - &beta).norm();
        beta = next;
        iterations_run += 1;
        if step < config.convergence_eps && iterations_run >= config.min_iterations {
            converged = true;
            break;
        }
    }
    if !converged {
        log::debug!("iGLS stopped at the iteration cap ({iterations_run})");
    }
    Ok(BetaEstimate {
        beta,
        iterations_run,
        converged,
        used_pseudoinverse: pseudo,
    })
}

/// `Σ_GLS(β) = [(A_oF)ᵗG(β)A_oF]⁻¹`.
pub fn gls_covariance(
    beta: &DVector<f64>,
    f: &DMatrix<f64>,
    a_o: &DMatrix<f64>,
    gamma: f64,
) -> Result<DMatrix<f64>> {
    let g = g_matrix(beta, f, a_o, gamma)?;
    if g.pseudo {
        return Err(Error::Singular("A_o diag(|F beta|^2gamma) A_o^t"));
    }
    let x = a_o * f;
    let inv = invert(&symmetrize(&(x.transpose() * &g.matrix * &x)));
    if inv.pseudo {
        return Err(Error::Singular("(A_o F)^t G (A_o F)"));
    }
    Ok(symmetrize(&inv.matrix))
}

/// Blocks of `Σ(β) = A diag(|Fβ|^{2γ}) Aᵗ` in scenario order.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaBlocks {
    pub oo: DMatrix<f64>,
    pub ou: DMatrix<f64>,
    pub uo: DMatrix<f64>,
    pub uu: DMatrix<f64>,
}

impl SigmaBlocks {
    /// `[Σ_oo Σ_ou; Σ_uo Σ_uu]`.
    pub fn assemble(&self) -> DMatrix<f64> {
        let (no, nu) = (self.oo.nrows(), self.uu.nrows());
        let mut m = DMatrix::zeros(no + nu, no + nu);
        m.view_mut((0, 0), (no, no)).copy_from(&self.oo);
        m.view_mut((0, no), (no, nu)).copy_from(&self.ou);
        m.view_mut((no, 0), (nu, no)).copy_from(&self.uo);
        m.view_mut((no, no), (nu, nu)).copy_from(&self.uu);
        m
    }
}

pub fn sigma_blocks(
    beta: &DVector<f64>,
    f: &DMatrix<f64>,
    a: &RoutingMatrix,
    gamma: f64,
    s: &ObservationScenario,
) -> Result<SigmaBlocks> {
    let (a_o, a_u) = partition(a, s)?;
    let w = flow_weights(beta, f, gamma, &a_o)?;
    let oo = symmetrize(&weighted_gram(&a_o, &w, &a_o));
    let uo = weighted_gram(&a_u, &w, &a_o);
    let uu = symmetrize(&weighted_gram(&a_u, &w, &a_u));
    Ok(SigmaBlocks {
        ou: uo.transpose(),
        oo,
        uo,
        uu,
    })
}

/// `⟨vec Σ̂_Yo, vec Σ_oo(β̂)⟩ / ‖vec Σ_oo(β̂)‖²`.
pub fn estimate_sigma(sigma_yo_hat: &DMatrix<f64>, sigma_oo: &DMatrix<f64>) -> Result<f64> {
    if sigma_yo_hat.shape() != sigma_oo.shape() {
        return Err(Error::Dimension {
            context: "estimate_sigma",
            expected: sigma_oo.nrows(),
            actual: sigma_yo_hat.nrows(),
        });
    }
    let denom = frobenius_dot(sigma_oo, sigma_oo);
    if denom == 0.0 {
        return Err(Error::ZeroDenominator("estimate_sigma"));
    }
    Ok(frobenius_dot(sigma_yo_hat, sigma_oo) / denom)
}

/// `(σ²/m)(1 + 2 Σ_{i=1}^{m−1} (1 − i/m) ρ(i))`; `rho[i]` is the lag-`i`
/// autocorrelation and needs at least `m` entries.
pub fn sigma_m2(sigma2: f64, rho: &[f64], m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    if rho.len() < m {
        return Err(Error::Dimension {
            context: "autocorrelation lags",
            expected: m,
            actual: rho.len(),
        });
    }
    let mf = m as f64;
    let sum: f64 = (1..m).map(|i| (1.0 - i as f64 / mf) * rho[i]).sum();
    Ok(sigma2 / mf * (1.0 + 2.0 * sum))
}

/// A fitted network-specific model at one time point.
#[derive(Debug, Clone)]
pub struct ModelFit {
    pub beta: BetaEstimate,
    pub sigma2_hat: f64,
    pub factors: FactorMatrix,
    pub gamma: f64,
    pub scenario: ObservationScenario,
    pub blocks: SigmaBlocks,
    /// `A_o F β̂`
    pub mean_o: DVector<f64>,
    /// `A_u F β̂`
    pub mean_u: DVector<f64>,
}

/// Fits `β̂` by iGLS on `Ȳ_o(t0)` and `σ̂²` from the window's sample
/// covariance of the observed links.
pub fn fit_model(
    links: &TraceSet,
    a: &RoutingMatrix,
    s: &ObservationScenario,
    factors: &FactorMatrix,
    config: &ModelConfig,
    t0: usize,
) -> Result<ModelFit> {
    config.validate()?;
    if factors.n_flows() != a.n_routes() {
        return Err(Error::Dimension {
            context: "factor rows vs routes",
            expected: a.n_routes(),
            actual: factors.n_flows(),
        });
    }
    let (a_o, _) = partition(a, s)?;
    let y_o = links.values().select_rows(s.observed_rows().iter());
    let yb = ybar(&y_o, t0, config.window)?;
    let cov = window_covariance(&y_o, t0, config.window)?;
    fit_from_moments(&yb, &cov, &a_o, a, s, factors, config)
}

/// Same as [`fit_model`] from precomputed `Ȳ_o` and `Σ̂_Yo`.
pub fn fit_from_moments(
    ybar_o: &DVector<f64>,
    sigma_yo_hat: &DMatrix<f64>,
    a_o: &DMatrix<f64>,
    a: &RoutingMatrix,
    s: &ObservationScenario,
    factors: &FactorMatrix,
    config: &ModelConfig,
) -> Result<ModelFit> {
    let f = factors.matrix();
    let beta = igls_estimate(ybar_o, a_o, f, config.gamma, config)?;
    let blocks = sigma_blocks(&beta.beta, f, a, config.gamma, s)?;
    let sigma2_hat = estimate_sigma(sigma_yo_hat, &blocks.oo)?;
    let (_, a_u) = partition(a, s)?;
    let mu = f * &beta.beta;
    Ok(ModelFit {
        mean_o: a_o * &mu,
        mean_u: a_u * &mu,
        beta,
        sigma2_hat,
        factors: factors.clone(),
        gamma: config.gamma,
        scenario: s.clone(),
        blocks,
    })
}

/// `A_uFβ̂ + Σ_uoΣ_oo⁻¹(y_o − A_oFβ̂)` with error covariance
/// `σ̂²(Σ_uu − Σ_uoΣ_oo⁻¹Σ_ou)`.
pub fn plug_in_predict(fit: &ModelFit, y_o: &DVector<f64>) -> Result<KrigingPrediction> {
    let b = &fit.blocks;
    let mut pred = krige_blocks(&fit.mean_o, &fit.mean_u, &b.oo, &b.uo, &b.uu, y_o, true)?;
    pred.error_covariance *= fit.sigma2_hat;
    Ok(pred)
}

impl ModelFit {
    /// Writes a `key = value` record; `f_file` names where `F` was stored.
    pub fn write_record<W: Write>(&self, mut out: W, f_file: Option<&str>) -> Result<()> {
        let beta: Vec<String> = self.beta.beta.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "beta = {}", beta.join(","))?;
        writeln!(out, "sigma2_hat = {:e}", self.sigma2_hat)?;
        writeln!(out, "gamma = {}", self.gamma)?;
        writeln!(out, "p = {}", self.factors.p())?;
        match self.scenario.scenario_id() {
            Some(id) => writeln!(out, "scenario = {id}")?,
            None => writeln!(out, "scenario = custom")?,
        }
        let join = |v: &[usize]| v.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(",");
        writeln!(out, "observed = {}", join(self.scenario.observed()))?;
        writeln!(out, "unobserved = {}", join(self.scenario.unobserved()))?;
        writeln!(out, "iterations = {}", self.beta.iterations_run)?;
        writeln!(out, "converged = {}", self.beta.converged)?;
        writeln!(out, "pseudo_inverse = {}", self.beta.used_pseudoinverse)?;
        writeln!(out, "f_file = {}", f_file.unwrap_or("-"))?;
        Ok(())
    }
}
