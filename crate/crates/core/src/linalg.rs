//! Small dense linear-algebra helpers shared by the predictors.

use nalgebra::{DMatrix, DVector};

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Result of inverting a matrix that may be rank deficient.
#[derive(Debug, Clone)]
pub struct Inverse {
    pub matrix: DMatrix<f64>,
    /// Set when the Moore-Penrose pseudo-inverse was used.
    pub pseudo: bool,
}

/// Inverts `m` with a fully pivoted LU factorization, falling back to the
/// pseudo-inverse when the pivots indicate numerical rank deficiency.
pub fn invert(m: &DMatrix<f64>) -> Inverse {
    assert!(m.is_square(), "invert: matrix must be square");
    if m.nrows() == 0 {
        return Inverse {
            matrix: DMatrix::zeros(0, 0),
            pseudo: false,
        };
    }
    let lu = m.clone().full_piv_lu();
    let u = lu.u();
    let diag = u.diagonal().map(f64::abs);
    let max = diag.max();
    let min = diag.min();
    if max > 0.0 && min > RANK_TOL * max {
        if let Some(inv) = lu.try_inverse() {
            if inv.iter().all(|v| v.is_finite()) {
                return Inverse {
                    matrix: inv,
                    pseudo: false,
                };
            }
        }
    }
    Inverse {
        matrix: pseudo_inverse(m),
        pseudo: true,
    }
}

/// Moore-Penrose pseudo-inverse with relative singular-value cutoff [`RANK_TOL`].
pub fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = RANK_TOL * smax;
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            out += (vt.row(k).transpose() / s) * u.column(k).transpose();
        }
    }
    out
}

/// Numerical rank with the same relative cutoff as [`pseudo_inverse`].
pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    sv.iter().filter(|&&s| s > RANK_TOL * smax && s > 0.0).count()
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// nonincreasing order. Columns of the returned matrix are the eigenvectors.
pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Frobenius inner product `vec(a)ᵗ vec(b)`.
pub fn frobenius_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Symmetrized copy, removing round-off asymmetry.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}
