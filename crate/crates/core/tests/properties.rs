use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use netkrig::chart::{iid_ewma_variance, lrd_ewma_variance, run_chart, ChartConfig};
use netkrig::eval::remse;
use netkrig::eval::synthetic::KnownModel;
use netkrig::joint::{fit_from_moments, g_matrix, plug_in_predict, ModelConfig};
use netkrig::kriging::{estimate_sigma_x, krige_blocks, ordinary_krige};
use netkrig::mean_model::{fit_factor_matrix, projection_residual, WindowedMeans};
use netkrig::sim::{inject_mean_shift, synthesize_flows, AnomalySpec};
use netkrig::topology::{
    build_routing_matrix, internet2_topology, partition, route_traffic, scenario,
    ObservationScenario, RoutePolicy, RoutingMatrix,
};
use netkrig::trace::{TraceKind, TraceSet};

fn internet2() -> RoutingMatrix {
    build_routing_matrix(&internet2_topology(), RoutePolicy::ShortestMetric).unwrap()
}

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn rel_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    (a - b).amax() <= tol * a.amax().max(b.amax()).max(1.0)
}

/// Disjoint nonempty observed/unobserved link sets drawn from `1..=n`.
fn split(n: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    prop::collection::vec(0u8..3, n).prop_filter_map("both sets nonempty", |tags| {
        let o: Vec<usize> = (1..=tags.len()).filter(|&l| tags[l - 1] == 1).collect();
        let u: Vec<usize> = (1..=tags.len()).filter(|&l| tags[l - 1] == 2).collect();
        (!o.is_empty() && !u.is_empty()).then_some((o, u))
    })
}

/// Random orthonormal `n × k` basis.
fn orthonormal(n: usize, k: usize) -> impl Strategy<Value = DMatrix<f64>> {
    matrix(n, k, -1.0, 1.0).prop_map(move |m| m.qr().q().columns(0, k).into_owned())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn routing_is_linear(
        x1 in matrix(72, 4, 0.0, 100.0),
        x2 in matrix(72, 4, 0.0, 100.0),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let r = internet2();
        let route = |x: DMatrix<f64>| route_traffic(&r, &TraceSet::new(x, TraceKind::Flow)).unwrap().into_values();
        let lhs = route(&x1 * a + &x2 * b);
        let rhs = route(x1) * a + route(x2) * b;
        prop_assert!(rel_close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn partition_draws_rows_verbatim((o, u) in split(26)) {
        let r = internet2();
        prop_assert!(r.entries().iter().all(|&v| v == 0.0 || v == 1.0));
        let s = ObservationScenario::new(o.clone(), u.clone()).unwrap();
        let (a_o, a_u) = partition(&r, &s).unwrap();
        for (k, l) in o.iter().enumerate() {
            prop_assert_eq!(a_o.row(k), r.entries().row(l - 1));
        }
        for (k, l) in u.iter().enumerate() {
            prop_assert_eq!(a_u.row(k), r.entries().row(l - 1));
        }
    }

    #[test]
    fn shift_commutes_with_routing(
        x in matrix(72, 12, 1.0, 50.0),
        flow in 1usize..=72,
        onset in 0usize..12,
        shift in -20.0f64..20.0,
    ) {
        let r = internet2();
        let flows = TraceSet::new(x, TraceKind::Flow);
        let spec = AnomalySpec { flow_index: flow, onset, shift };
        let shifted_then_routed = route_traffic(&r, &inject_mean_shift(&flows, &spec).unwrap()).unwrap();
        let mut routed = route_traffic(&r, &flows).unwrap().into_values();
        let col = r.entries().column(flow - 1).into_owned();
        for t in onset..12 {
            let mut c = routed.column_mut(t);
            c += &col * shift;
        }
        prop_assert!(rel_close(shifted_then_routed.values(), &routed, 1e-12));
    }

    #[test]
    fn simple_kriging_reproduces_duplicate_link(
        b in matrix(4, 6, -1.0, 1.0),
        mu in prop::collection::vec(-5.0f64..5.0, 4),
        y in prop::collection::vec(-5.0f64..5.0, 4),
        k in 0usize..4,
    ) {
        let c = &b * b.transpose() + DMatrix::identity(4, 4) * 0.1;
        let mu_o = DVector::from_vec(mu);
        let mu_u = DVector::from_element(1, mu_o[k]);
        let c_uo = c.rows(k, 1).into_owned();
        let c_uu = DMatrix::from_element(1, 1, c[(k, k)]);
        let y_o = DVector::from_vec(y);
        let p = krige_blocks(&mu_o, &mu_u, &c, &c_uo, &c_uu, &y_o, false).unwrap();
        prop_assert!((p.predicted[0] - y_o[k]).abs() < 1e-8);
        prop_assert!(p.error_covariance[(0, 0)].abs() < 1e-8);
    }

    #[test]
    fn ordinary_kriging_scale_free(
        (o, u) in split(26),
        y in prop::collection::vec(0.0f64..100.0, 26),
        sigma in 0.01f64..10.0,
    ) {
        let r = internet2();
        let s = ObservationScenario::new(o.clone(), u).unwrap();
        let y_o = DVector::from_iterator(o.len(), o.iter().map(|l| y[l - 1]));
        let p1 = ordinary_krige(&r, &s, sigma, &y_o).unwrap();
        let p7 = ordinary_krige(&r, &s, 7.0 * sigma, &y_o).unwrap();
        prop_assert!((&p1.predicted - &p7.predicted).amax() <= 1e-10 * p1.predicted.amax().max(1.0));
        prop_assert!(rel_close(&(p1.error_covariance * 7.0), &p7.error_covariance, 1e-10));
    }

    #[test]
    fn sigma_x_scale_equivariant(b in matrix(5, 5, -1.0, 1.0), k in 0.01f64..100.0) {
        let r = internet2();
        let (a_o, _) = partition(&r, &scenario(8).unwrap()).unwrap();
        let sig = &b * b.transpose() + DMatrix::identity(5, 5);
        let sig = sig.resize(a_o.nrows(), a_o.nrows(), 0.5);
        let s1 = estimate_sigma_x(&sig, &a_o).unwrap();
        let sk = estimate_sigma_x(&(sig * k), &a_o).unwrap();
        prop_assert!((sk - k * s1).abs() <= 1e-12 * (k * s1).abs().max(1e-300));
    }

    #[test]
    fn pca_residual_identity_and_orthonormality(
        means in (2usize..=10, 3usize..=30).prop_flat_map(|(j, n)| matrix(j, n, -10.0, 10.0)),
        p_raw in 1usize..=3,
    ) {
        let j = means.nrows();
        let p = p_raw.min(j);
        let wm = WindowedMeans { means: means.clone(), window_bins: 1 };
        let fm = fit_factor_matrix(&wm, p).unwrap();
        let f = fm.matrix();
        prop_assert!((f.transpose() * f - DMatrix::identity(p, p)).amax() < 1e-10);
        let tail: f64 = fm.eigenvalues().iter().skip(p).sum();
        let res = projection_residual(&means, &fm.projector());
        prop_assert!((res - tail).abs() <= 1e-8 * means.norm_squared().max(1.0));
    }

    #[test]
    fn pca_beats_random_subspaces(
        means in matrix(8, 20, -10.0, 10.0),
        competitors in prop::collection::vec(orthonormal(8, 3), 40),
    ) {
        let wm = WindowedMeans { means: means.clone(), window_bins: 1 };
        let fm = fit_factor_matrix(&wm, 3).unwrap();
        let best = projection_residual(&means, &fm.projector());
        for q in competitors {
            let other = projection_residual(&means, &(&q * q.transpose()));
            prop_assert!(best <= other + 1e-9 * means.norm_squared());
        }
    }

    #[test]
    fn pca_rotation_equivariant(means in matrix(6, 15, -10.0, 10.0), q in orthonormal(6, 6)) {
        let fit = |m: DMatrix<f64>| fit_factor_matrix(&WindowedMeans { means: m, window_bins: 1 }, 2).unwrap();
        let base = fit(means.clone()).projector();
        let rotated = fit(&q * means).projector();
        prop_assert!(rel_close(&rotated, &(&q * base * q.transpose()), 1e-7));
    }

    #[test]
    fn g_matrix_inverts_and_gls_information_is_positive(
        a_o in matrix(4, 9, 0.0, 1.0).prop_map(|m| m.map(|v| if v > 0.5 { 1.0 } else { 0.0 })),
        f in matrix(9, 2, 0.1, 1.0),
        beta in prop::collection::vec(0.1f64..5.0, 2),
        gamma in 0.5f64..2.0,
    ) {
        let beta = DVector::from_vec(beta);
        let mu = &f * &beta;
        let w = DMatrix::from_diagonal(&mu.map(|m| m.powf(2.0 * gamma)));
        let s = &a_o * w * a_o.transpose();
        let x = &a_o * &f;
        prop_assume!(s.clone().svd(false, false).singular_values.min() > 1e-6);
        prop_assume!(x.clone().svd(false, false).singular_values.min() > 1e-6);
        let g = g_matrix(&beta, &f, &a_o, gamma).unwrap();
        prop_assert!(!g.pseudo);
        prop_assert!((&g.matrix * &s - DMatrix::identity(4, 4)).amax() < 1e-8 * (1.0 + s.amax() * g.matrix.amax()));
        let info = x.transpose() * &g.matrix * &x;
        let min_eig = info.symmetric_eigenvalues().min();
        prop_assert!(min_eig > 0.0);
    }

    #[test]
    fn plug_in_prediction_independent_of_sigma(
        noise in prop::collection::vec(-0.05f64..0.05, 7),
        y in prop::collection::vec(-0.2f64..0.2, 7),
        k in 0.001f64..1000.0,
    ) {
        let r = internet2();
        let s = scenario(8).unwrap();
        let km = KnownModel::gravity(&r, 2, 50.0).unwrap();
        let (a_o, _) = partition(&r, &s).unwrap();
        let base = &a_o * km.flow_means();
        let ybar = DVector::from_iterator(7, base.iter().zip(&noise).map(|(b, e)| b * (1.0 + e)));
        let cov = &a_o * a_o.transpose() * 3.0;
        let cfg = ModelConfig::default();
        let fit1 = fit_from_moments(&ybar, &cov, &a_o, &r, &s, &km.factors, &cfg).unwrap();
        let fitk = fit_from_moments(&ybar, &(&cov * k), &a_o, &r, &s, &km.factors, &cfg).unwrap();
        let y_o = DVector::from_iterator(7, base.iter().zip(&y).map(|(b, e)| b * (1.0 + e)));
        let p1 = plug_in_predict(&fit1, &y_o).unwrap();
        let pk = plug_in_predict(&fitk, &y_o).unwrap();
        prop_assert!((&p1.predicted - &pk.predicted).amax() <= 1e-12 * p1.predicted.amax());
        prop_assert!(rel_close(&(p1.error_covariance * k), &pk.error_covariance, 1e-9));
    }

    #[test]
    fn remse_joint_scale_invariant(
        pred in matrix(3, 10, -5.0, 5.0),
        actual in matrix(3, 10, 1.0, 5.0),
        k in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0],
    ) {
        let r1 = remse(&pred, &actual).unwrap();
        let rk = remse(&(&pred * k), &(&actual * k)).unwrap();
        prop_assert!((r1 - rk).abs() <= 1e-12 * r1.max(1e-300));
    }

    #[test]
    fn ewma_variances_scale_with_sigma(lambda in 0.02f64..=1.0, h in 0.05f64..0.95, k in 0.01f64..100.0) {
        let iid = iid_ewma_variance(lambda, 1.0).unwrap();
        prop_assert!((iid_ewma_variance(lambda, k).unwrap() - k * iid).abs() <= 1e-14 * k * iid);
        let lrd = lrd_ewma_variance(lambda, 1.0, h, 1e-8).unwrap();
        prop_assert!(lrd.is_finite() && lrd > 0.0);
        let lrd_k = lrd_ewma_variance(lambda, k, h, 1e-8).unwrap();
        prop_assert!((lrd_k - k * lrd).abs() <= 1e-12 * k * lrd);
    }

    #[test]
    fn lrd_variance_dominates_iid(lambda in 0.02f64..=1.0, h in 0.5f64..0.95) {
        let iid = iid_ewma_variance(lambda, 1.0).unwrap();
        let lrd = lrd_ewma_variance(lambda, 1.0, h, 1e-8).unwrap();
        prop_assert!(lrd >= iid * (1.0 - 1e-6));
    }

    #[test]
    fn chart_alarms_invariant_under_joint_scaling(
        res in prop::collection::vec(-4.0f64..4.0, 50..200),
        k in 0.01f64..100.0,
        lrd_adjusted in any::<bool>(),
    ) {
        let cfg = ChartConfig { lambda: 0.2, sigma2: 1.0, hurst: 0.8, limit_multiplier: 3.0, lrd_adjusted };
        let scaled: Vec<f64> = res.iter().map(|v| v * k).collect();
        let a = run_chart(&res, &cfg).unwrap();
        let b = run_chart(&scaled, &ChartConfig { sigma2: k * k, ..cfg }).unwrap();
        // exact ties at the limit are measure-zero but guard against rounding there
        for (t, (x, y)) in a.alarms.iter().zip(&b.alarms).enumerate() {
            let margin = (a.statistic[t].abs() - a.limit).abs() / a.limit;
            prop_assert!(x == y || margin < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn flow_synthesis_is_bit_reproducible(seed in any::<u64>()) {
        let mu = [10.0, 200.0, 35.0];
        let a = synthesize_flows(&mu, 0.8, 1.5, 0.75, 300, seed).unwrap();
        let b = synthesize_flows(&mu, 0.8, 1.5, 0.75, 300, seed).unwrap();
        prop_assert_eq!(a.values().as_slice(), b.values().as_slice());
    }
}
