//! Simple kriging from windowed moments and ordinary kriging from the
//! routing matrix.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{frobenius_dot, invert, symmetrize};
use crate::topology::{partition, ObservationScenario, RoutingMatrix};
use crate::trace::TraceSet;

/// Sample mean and covariance of all series over bins `t0−m .. t0−1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub window: usize,
    pub at_time: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrigingPrediction {
    pub predicted: DVector<f64>,
    pub error_covariance: DMatrix<f64>,
    pub used_pseudoinverse: bool,
}

impl KrigingPrediction {
    /// Diagonal of the error covariance.
    pub fn error_variances(&self) -> DVector<f64> {
        self.error_covariance.diagonal()
    }
}

/// Sample moments from the `m` bins strictly before `t0`; the covariance
/// uses divisor `m − 1`.
pub fn windowed_moments(y: &TraceSet, t0: usize, m: usize) -> Result<MomentEstimate> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!(
            "moment window must be at least 2 bins, got {m}"
        )));
    }
    if t0 < m || t0 > y.len() {
        return Err(Error::InsufficientHistory {
            needed: m,
            available: t0.min(y.len()),
            t0,
        });
    }
    let block = y.values().columns(t0 - m, m);
    let mean = block.column_sum() / m as f64;
    let mut covariance = DMatrix::zeros(y.series_count(), y.series_count());
    for col in block.column_iter() {
        let d = col - &mean;
        covariance.ger(1.0, &d, &d, 1.0);
    }
    covariance /= (m - 1) as f64;
    Ok(MomentEstimate {
        mean,
        covariance: symmetrize(&covariance),
        window: m,
        at_time: t0,
    })
}

/// `Ŷ_u = μ_u + Σ_uo Σ_oo⁻¹ (y_o − μ_o)` with error covariance
/// `Σ_uu − Σ_uo Σ_oo⁻¹ Σ_ou`, from already-partitioned moments.
#[allow(clippy::too_many_arguments)]
pub fn krige_blocks(
    mu_o: &DVector<f64>,
    mu_u: &DVector<f64>,
    sigma_oo: &DMatrix<f64>,
    sigma_uo: &DMatrix<f64>,
    sigma_uu: &DMatrix<f64>,
    y_o: &DVector<f64>,
    allow_pseudo_inverse: bool,
) -> Result<KrigingPrediction> {
    if y_o.len() != mu_o.len() {
        return Err(Error::Dimension {
            context: "observed values",
            expected: mu_o.len(),
            actual: y_o.len(),
        });
    }
    let inv = invert(sigma_oo);
    if inv.pseudo && !allow_pseudo_inverse {
        return Err(Error::Singular("observed covariance block"));
    }
    let gain = sigma_uo * &inv.matrix;
    let predicted = mu_u + &gain * (y_o - mu_o);
    let error_covariance = symmetrize(&(sigma_uu - &gain * sigma_uo.transpose()));
    Ok(KrigingPrediction {
        predicted,
        error_covariance,
        used_pseudoinverse: inv.pseudo,
    })
}

/// Simple kriging of the unobserved links of `s` using full-network moments.
pub fn simple_krige(
    moments: &MomentEstimate,
    y_o: &DVector<f64>,
    s: &ObservationScenario,
    allow_pseudo_inverse: bool,
) -> Result<KrigingPrediction> {
    s.validate(moments.mean.len())?;
    let o = s.observed_rows();
    let u = s.unobserved_rows();
    let mu_o = moments.mean.select_rows(o.iter());
    let mu_u = moments.mean.select_rows(u.iter());
    let c = &moments.covariance;
    let sigma_oo = c.select_rows(o.iter()).select_columns(o.iter());
    let sigma_uo = c.select_rows(u.iter()).select_columns(o.iter());
    let sigma_uu = c.select_rows(u.iter()).select_columns(u.iter());
    krige_blocks(&mu_o, &mu_u, &sigma_oo, &sigma_uo, &sigma_uu, y_o, allow_pseudo_inverse)
}

/// Least-squares scale `σ̂²_X` fitting `Σ̂_Yo ≈ σ² A_o A_oᵗ` in Frobenius norm.
pub fn estimate_sigma_x(sigma_yo_hat: &DMatrix<f64>, a_o: &DMatrix<f64>) -> Result<f64> {
    let aat = a_o * a_o.transpose();
    if aat.shape() != sigma_yo_hat.shape() {
        return Err(Error::Dimension {
            context: "estimate_sigma_x",
            expected: aat.nrows(),
            actual: sigma_yo_hat.nrows(),
        });
    }
    let denom = frobenius_dot(&aat, &aat);
    if denom == 0.0 {
        return Err(Error::ZeroDenominator("estimate_sigma_x"));
    }
    Ok(frobenius_dot(sigma_yo_hat, &aat) / denom)
}

/// Ordinary-kriging weights for every unobserved link: row `k` holds the
/// `|O|` weights for `U[k]`. They depend only on `A` and the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct OrdinaryWeights {
    pub weights: DMatrix<f64>,
    pub lagrange: DVector<f64>,
    pub used_pseudoinverse: bool,
}

/// Solves `[Γ_oo 1; 1ᵗ 0] [λ; μ] = [γ_ou; 1]` with variograms
/// `E(Y_i − Y_j)² ∝ (AAᵗ)_ii + (AAᵗ)_jj − 2(AAᵗ)_ij`.
pub fn ordinary_weights(a: &RoutingMatrix, s: &ObservationScenario) -> Result<OrdinaryWeights> {
    let (a_o, a_u) = partition(a, s)?;
    let c_oo = &a_o * a_o.transpose();
    let c_uo = &a_u * a_o.transpose();
    let c_uu = &a_u * a_u.transpose();
    let n_o = a_o.nrows();
    let n = n_o + 1;
    let mut system = DMatrix::zeros(n, n);
    for i in 0..n_o {
        for j in 0..n_o {
            system[(i, j)] = c_oo[(i, i)] + c_oo[(j, j)] - 2.0 * c_oo[(i, j)];
        }
        system[(i, n_o)] = 1.0;
        system[(n_o, i)] = 1.0;
    }
    let inv = invert(&system);
    if inv.pseudo {
        warn!("ordinary kriging system is singular; using pseudo-inverse");
    }
    let n_u = a_u.nrows();
    let mut weights = DMatrix::zeros(n_u, n_o);
    let mut lagrange = DVector::zeros(n_u);
    for k in 0..n_u {
        let mut rhs = DVector::zeros(n);
        for i in 0..n_o {
            rhs[i] = c_uu[(k, k)] + c_oo[(i, i)] - 2.0 * c_uo[(k, i)];
        }
        rhs[n_o] = 1.0;
        let sol = &inv.matrix * rhs;
        for i in 0..n_o {
            weights[(k, i)] = sol[i];
        }
        lagrange[k] = sol[n_o];
    }
    Ok(OrdinaryWeights {
        weights,
        lagrange,
        used_pseudoinverse: inv.pseudo,
    })
}

/// Ordinary-kriging prediction `λᵗ y_o` and its error covariance under
/// `Σ_Y = σ²_X AAᵗ`.
pub fn ordinary_krige(
    a: &RoutingMatrix,
    s: &ObservationScenario,
    sigma_x2: f64,
    y_o: &DVector<f64>,
) -> Result<KrigingPrediction> {
    if !(sigma_x2 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sigma_x2 must be positive, got {sigma_x2}"
        )));
    }
    let w = ordinary_weights(a, s)?;
    if y_o.len() != w.weights.ncols() {
        return Err(Error::Dimension {
            context: "observed values",
            expected: w.weights.ncols(),
            actual: y_o.len(),
        });
    }
    Ok(ordinary_from_weights(a, s, &w, sigma_x2, y_o))
}

pub(crate) fn ordinary_from_weights(
    a: &RoutingMatrix,
    s: &ObservationScenario,
    w: &OrdinaryWeights,
    sigma_x2: f64,
    y_o: &DVector<f64>,
) -> KrigingPrediction {
    let (a_o, a_u) = partition(a, s).expect("scenario validated");
    let c_oo = &a_o * a_o.transpose();
    let c_uo = &a_u * a_o.transpose();
    let c_uu = &a_u * a_u.transpose();
    let lam = &w.weights;
    let cross = lam * c_uo.transpose();
    let err = &c_uu - &cross - cross.transpose() + lam * &c_oo * lam.transpose();
    KrigingPrediction {
        predicted: lam * y_o,
        error_covariance: symmetrize(&err) * sigma_x2,
        used_pseudoinverse: w.used_pseudoinverse,
    }
}
