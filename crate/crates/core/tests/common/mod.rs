#![allow(dead_code)]

use gw_core::gw::random_coupling;
use gw_core::sampling::sample_sphere_uniform;
use gw_core::{Coupling, FiniteMMSpace, MetricKind, Seed};
use ndarray::{Array1, Array2};
use proptest::collection::vec;
use proptest::prelude::*;

/// Euclidean point cloud in R³ with positive normalized weights.
pub fn finite_space(min: usize, max: usize) -> impl Strategy<Value = FiniteMMSpace> {
    (min..=max)
        .prop_flat_map(|n| (vec(-1.0..1.0f64, n * 3), vec(0.05..1.0f64, n)))
        .prop_map(|(pts, w)| {
            let n = w.len();
            let coords = Array2::from_shape_vec((n, 3), pts).unwrap();
            let total: f64 = w.iter().sum();
            let w: Array1<f64> = w.iter().map(|x| x / total).collect();
            FiniteMMSpace::from_coords(coords, MetricKind::Euclidean, w).unwrap()
        })
}

/// Uniformly weighted unit cloud on 𝕊^dim.
pub fn unit_space(dim: usize, n: usize, seed: u64, metric: MetricKind) -> FiniteMMSpace {
    sample_sphere_uniform(dim, n, Seed(seed)).unwrap().to_space_uniform(metric).unwrap()
}

pub fn interior_coupling(x: &FiniteMMSpace, y: &FiniteMMSpace, seed: u64) -> Coupling {
    Coupling::new(random_coupling(x.weights(), y.weights(), seed), x.weights().clone(), y.weights().clone()).unwrap()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
