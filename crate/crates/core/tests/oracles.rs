use nalgebra::{DMatrix, DVector};

use netkrig::kriging::{estimate_sigma_x, ordinary_weights};
use netkrig::topology::{ObservationScenario, RoutingMatrix};

/// Golden-section minimiser of a unimodal function on `[lo, hi]`.
fn golden(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let a = hi - r * (hi - lo);
        let b = lo + r * (hi - lo);
        if f(a) < f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn sigma_x_matches_scalar_least_squares_search() {
    let a = RoutingMatrix::from_rows(&[&[1, 1, 0, 0], &[0, 1, 1, 0], &[1, 0, 1, 1]]).unwrap();
    let a_o = a.entries().clone();
    let aat = &a_o * a_o.transpose();
    let s = DMatrix::from_row_slice(3, 3, &[4.1, 1.7, 2.2, 1.7, 3.3, 0.9, 2.2, 0.9, 5.8]);
    // one-column least squares on the vectorised matrices, solved by SVD
    let x = DMatrix::from_column_slice(9, 1, aat.as_slice());
    let y = DVector::from_column_slice(s.as_slice());
    let oracle = x.svd(true, true).solve(&y, 1e-14).unwrap()[0];
    let got = estimate_sigma_x(&s, &a_o).unwrap();
    assert!((got - oracle).abs() < 1e-10 * oracle.abs(), "{got} vs {oracle}");
    // the minimiser found by a derivative-free search agrees to its own precision
    let searched = golden(|c| (&s - &aat * c).norm_squared(), -100.0, 100.0);
    assert!((got - searched).abs() < 1e-6);
}

/// Variance of `Y_u − λᵗY_o` under `Σ = AAᵗ`.
fn prediction_variance(c_oo: &DMatrix<f64>, c_uo: &DVector<f64>, c_uu: f64, lam: &DVector<f64>) -> f64 {
    c_uu - 2.0 * lam.dot(c_uo) + (lam.transpose() * c_oo * lam)[(0, 0)]
}

#[test]
fn ordinary_weights_match_constrained_grid_search() {
    // four links over five flows; predict link 4 from links 1..3
    let a = RoutingMatrix::from_rows(&[
        &[1, 1, 0, 0, 0],
        &[0, 1, 1, 0, 1],
        &[0, 0, 1, 1, 0],
        &[1, 0, 0, 1, 1],
    ])
    .unwrap();
    let s = ObservationScenario::new(vec![1, 2, 3], vec![4]).unwrap();
    let e = a.entries();
    let c = e * e.transpose();
    let c_oo = c.view((0, 0), (3, 3)).into_owned();
    let c_uo = DVector::from_iterator(3, (0..3).map(|i| c[(3, i)]));
    let c_uu = c[(3, 3)];
    // λ = (x, y, 1 − x − y): shrinking grid search over the two free weights
    let var = |x: f64, y: f64| prediction_variance(&c_oo, &c_uo, c_uu, &DVector::from_vec(vec![x, y, 1.0 - x - y]));
    let (mut cx, mut cy, mut half) = (0.0, 0.0, 5.0);
    for _ in 0..40 {
        let mut best = (f64::MAX, cx, cy);
        for i in 0..=40 {
            for j in 0..=40 {
                let x = cx - half + 2.0 * half * i as f64 / 40.0;
                let y = cy - half + 2.0 * half * j as f64 / 40.0;
                let v = var(x, y);
                if v < best.0 {
                    best = (v, x, y);
                }
            }
        }
        cx = best.1;
        cy = best.2;
        half *= 0.5;
    }
    let w = ordinary_weights(&a, &s).unwrap();
    let got = w.weights.row(0);
    assert!((got[0] - cx).abs() < 1e-7, "{got} vs ({cx}, {cy})");
    assert!((got[1] - cy).abs() < 1e-7, "{got} vs ({cx}, {cy})");
    assert!((got.sum() - 1.0).abs() < 1e-12);
}
