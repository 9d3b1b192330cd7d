//! Synthetic flow traffic with controlled mean structure.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mean_model::FactorMatrix;
use crate::sim::fgn::stream_rng;
use crate::sim::synthesize_flows_with_means;
use crate::topology::RoutingMatrix;
use crate::trace::TraceSet;

/// Two nonnegative gravity profiles over the routes of `a`: route `i→k`
/// gets `out_i · in_k` with log-uniform node weights in `[1, 10]`.
pub fn gravity_profiles(a: &RoutingMatrix, structure_seed: u64) -> (DVector<f64>, DVector<f64>) {
    let mut nodes: Vec<&str> = Vec::new();
    for (src, dst) in a.route_labels() {
        for n in [src.as_str(), dst.as_str()] {
            if !nodes.contains(&n) {
                nodes.push(n);
            }
        }
    }
    let mut rng = stream_rng(structure_seed, u64::MAX);
    let mut draw = || -> Vec<f64> { (0..nodes.len()).map(|_| 10f64.powf(rng.random::<f64>())).collect() };
    let (out1, in1, out2, in2) = (draw(), draw(), draw(), draw());
    let idx = |n: &str| nodes.iter().position(|&m| m == n).expect("node listed");
    let profile = |o: &[f64], i: &[f64]| {
        DVector::from_iterator(
            a.n_routes(),
            a.route_labels().iter().map(|(s, d)| o[idx(s)] * i[idx(d)]),
        )
    };
    (profile(&out1, &in1), profile(&out2, &in2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanStructure {
    /// `μ(t) = b₁(t) u + b₂(t) v` with slowly varying positive `b`.
    LowRank,
    /// Every flow follows its own phase-shifted cycle.
    FullRank,
    /// Constant means `scale · u`.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalogSpec {
    pub length: usize,
    pub hurst: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub structure: MeanStructure,
    /// Multiplies the gravity profiles (profile entries lie in `[1, 100]`).
    pub mean_scale: f64,
    /// Period of the mean cycle in bins.
    pub period: f64,
    /// Relative amplitude of the mean cycle.
    pub modulation: f64,
    pub structure_seed: u64,
}

impl Default for AnalogSpec {
    fn default() -> Self {
        Self {
            length: 2000,
            hurst: 0.8,
            sigma: 1.5,
            gamma: 0.75,
            structure: MeanStructure::LowRank,
            mean_scale: 100.0,
            period: 2000.0,
            modulation: 0.3,
            structure_seed: 1,
        }
    }
}

/// `J × length` mean path for `spec`.
pub fn mean_path(a: &RoutingMatrix, spec: &AnalogSpec) -> Result<DMatrix<f64>> {
    if !(spec.mean_scale > 0.0 && spec.period > 0.0) || !(0.0..1.0).contains(&spec.modulation) {
        return Err(Error::InvalidParameter(
            "mean scale and period must be positive and modulation in [0,1)".into(),
        ));
    }
    let (u, v) = gravity_profiles(a, spec.structure_seed);
    let (j, n) = (a.n_routes(), spec.length);
    let w = 2.0 * PI / spec.period;
    let c = spec.modulation;
    Ok(match spec.structure {
        MeanStructure::Constant => DMatrix::from_fn(j, n, |r, _| spec.mean_scale * u[r]),
        MeanStructure::LowRank => DMatrix::from_fn(j, n, |r, t| {
            let t = t as f64;
            let b1 = 1.0 + c * (w * t).sin();
            let b2 = 0.5 * (1.0 + c * (1.7 * w * t).cos());
            spec.mean_scale * (b1 * u[r] + b2 * v[r])
        }),
        MeanStructure::FullRank => {
            let mut rng = stream_rng(spec.structure_seed, u64::MAX - 1);
            let phases: Vec<f64> = (0..j).map(|_| 2.0 * PI * rng.random::<f64>()).collect();
            DMatrix::from_fn(j, n, |r, t| {
                spec.mean_scale * u[r] * (1.0 + c * (w * t as f64 + phases[r]).sin())
            })
        }
    })
}

/// Flow traffic for `spec` with fGn noise drawn from `seed`.
pub fn analog_flows(a: &RoutingMatrix, spec: &AnalogSpec, seed: u64) -> Result<TraceSet> {
    let means = mean_path(a, spec)?;
    synthesize_flows_with_means(&means, spec.hurst, spec.sigma, spec.gamma, seed)
}

/// A model with known `F` and `β` for consistency experiments.
#[derive(Debug, Clone)]
pub struct KnownModel {
    pub factors: FactorMatrix,
    pub beta: DVector<f64>,
    pub gamma: f64,
    pub sigma2: f64,
    pub hurst: f64,
}

impl KnownModel {
    /// `F` spans the two gravity profiles; `Fβ = scale·(u + v/2)`.
    pub fn gravity(a: &RoutingMatrix, structure_seed: u64, scale: f64) -> Result<Self> {
        let (u, v) = gravity_profiles(a, structure_seed);
        let basis = DMatrix::from_columns(&[u.clone(), v.clone()]);
        let q = basis.qr().q();
        let mut q = q.columns(0, 2).into_owned();
        for mut col in q.column_iter_mut() {
            if col.iter().find(|x| x.abs() > 1e-12).is_some_and(|&x| x < 0.0) {
                col.neg_mut();
            }
        }
        let mu = (u + v * 0.5) * scale;
        let beta = q.transpose() * &mu;
        Ok(Self {
            factors: FactorMatrix::from_basis(q, None)?,
            beta,
            gamma: 0.75,
            sigma2: 2.25,
            hurst: 0.8,
        })
    }

    pub fn flow_means(&self) -> DVector<f64> {
        self.factors.matrix() * &self.beta
    }

    /// Flows `Fβ + σ|Fβ|^γ Z` with independent fGn `Z`.
    pub fn simulate(&self, length: usize, seed: u64) -> Result<TraceSet> {
        let mu = self.flow_means();
        let means = DMatrix::from_fn(mu.len(), length, |j, _| mu[j]);
        synthesize_flows_with_means(&means, self.hurst, self.sigma2.sqrt(), self.gamma, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_routing_matrix, internet2_topology, RoutePolicy};

    fn internet2() -> RoutingMatrix {
        build_routing_matrix(&internet2_topology(), RoutePolicy::ShortestMetric).unwrap()
    }

    #[test]
    fn profiles_are_deterministic_and_in_range() {
        let a = internet2();
        let (u, v) = gravity_profiles(&a, 5);
        assert_eq!((u.clone(), v.clone()), gravity_profiles(&a, 5));
        assert_ne!(u, gravity_profiles(&a, 6).0);
        assert!(u.iter().chain(v.iter()).all(|&x| (1.0..=100.0).contains(&x)));
    }

    #[test]
    fn low_rank_path_has_rank_two() {
        let a = internet2();
        let spec = AnalogSpec { length: 500, ..Default::default() };
        let means = mean_path(&a, &spec).unwrap();
        let sv = means.singular_values();
        assert!(sv[2] < 1e-9 * sv[0]);
        assert!(sv[1] > 1e-3 * sv[0]);
        let full = mean_path(&a, &AnalogSpec { structure: MeanStructure::FullRank, ..spec }).unwrap();
        assert!(full.singular_values()[2] > 1e-3 * sv[0]);
    }

    #[test]
    fn known_model_reproduces_means() {
        let a = internet2();
        let km = KnownModel::gravity(&a, 3, 30.0).unwrap();
        let (u, v) = gravity_profiles(&a, 3);
        let mu = (u + v * 0.5) * 30.0;
        assert!((km.flow_means() - &mu).amax() < 1e-9 * mu.amax());
        assert!(km.flow_means().iter().all(|&x| x > 0.0));
    }
}
