mod common;

use common::*;
use gw_core::bounds::tlb;
use gw_core::coupling::validate_with_tol;
use gw_core::gw::{gw_gradient, gw_gradient_reference};
use gw_core::*;
use proptest::prelude::*;

const SOLVER_PQ: [(f64, f64); 4] = [(4.0, 2.0), (2.0, 1.0), (1.0, 1.0), (3.0, 2.0)];

fn valid(c: &Coupling) -> bool {
    validate_with_tol(c, 1e-8).ok
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cgd_is_valid_monotone_and_above_tlb(x in finite_space(2, 8), y in finite_space(2, 8), k in 0usize..SOLVER_PQ.len(), seed in any::<u64>()) {
        let pq = PqParams::new(SOLVER_PQ[k].0, SOLVER_PQ[k].1).unwrap();
        for init in [Init::Product, Init::Random(seed)] {
            let params = GwSolveParams { init, ..GwSolveParams::with_pq(pq) };
            let r = gw_cgd(&x, &y, &params).unwrap();
            prop_assert!(valid(&r.coupling));
            for w in r.objective_trace.windows(2) {
                prop_assert!(w[1] <= w[0], "trace increased: {} -> {}", w[0], w[1]);
            }
            let lower = tlb(&x, &y, pq.p, pq.q).unwrap().value;
            prop_assert!(r.value >= lower - 1e-6, "value {} < tlb {lower}", r.value);
            let recomputed = distortion_pq(&x, &y, &r.coupling, pq).unwrap();
            prop_assert!(rel_close(r.value, recomputed, 1e-12));
        }
    }

    #[test]
    fn entropic_is_valid_and_above_tlb(x in finite_space(2, 6), y in finite_space(2, 6)) {
        let params = GwSolveParams { epsilon: 0.05, max_iter: 200, ..GwSolveParams::default() };
        let r = gw_entropic(&x, &y, &params).unwrap();
        prop_assert!(valid(&r.coupling));
        prop_assert!(r.value >= tlb(&x, &y, 4.0, 2.0).unwrap().value - 1e-6);
    }

    #[test]
    fn quadratic_gradient_matches_reference(x in finite_space(5, 5), y in finite_space(5, 5), seed in any::<u64>()) {
        let g = interior_coupling(&x, &y, seed);
        for (p, q) in [(4.0, 2.0), (2.0, 1.0), (3.0, 1.5), (1.0, 1.0)] {
            let pq = PqParams::new(p, q).unwrap();
            let fast = gw_gradient(&x, &y, &g, pq).unwrap();
            let slow = gw_gradient_reference(&x, &y, &g, pq);
            let scale = slow.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for (a, b) in fast.iter().zip(slow.iter()) {
                prop_assert!((a - b).abs() <= 1e-8 * scale, "({p},{q}) {a} vs {b}");
            }
        }
    }
}

#[test]
fn cgd_is_deterministic() {
    let x = unit_space(1, 30, 1, MetricKind::Euclidean);
    let y = unit_space(2, 25, 2, MetricKind::Euclidean);
    let params = GwSolveParams { init: Init::Random(77), ..GwSolveParams::default() };
    let a = gw_cgd(&x, &y, &params).unwrap();
    let b = gw_cgd(&x, &y, &params).unwrap();
    assert_eq!(a.value.to_bits(), b.value.to_bits());
    assert_eq!(a.coupling, b.coupling);
    assert_eq!(a.objective_trace, b.objective_trace);
    let m1 = multistart(&x, &y, &GwSolveParams::default(), 4, 5).unwrap();
    let m2 = multistart(&x, &y, &GwSolveParams::default(), 4, 5).unwrap();
    assert_eq!(m1.value.to_bits(), m2.value.to_bits());
}

#[test]
fn entropic_is_deterministic() {
    let x = unit_space(1, 15, 1, MetricKind::Euclidean);
    let y = unit_space(2, 12, 2, MetricKind::Euclidean);
    let params = GwSolveParams { epsilon: 0.05, max_iter: 50, ..GwSolveParams::default() };
    let a = gw_entropic(&x, &y, &params).unwrap();
    let b = gw_entropic(&x, &y, &params).unwrap();
    assert_eq!(a.value.to_bits(), b.value.to_bits());
    assert_eq!(a.coupling, b.coupling);
}

#[test]
fn cgd_recovers_identity_from_diagonal_start() {
    let x = unit_space(2, 20, 3, MetricKind::Geodesic);
    let params = GwSolveParams { init: Init::Diagonal, ..GwSolveParams::default() };
    let r = gw_cgd(&x, &x, &params).unwrap();
    assert_eq!(r.value, 0.0);
}

#[test]
fn entropic_blur_on_isometric_pair() {
    let x = unit_space(2, 20, 3, MetricKind::Geodesic);
    let params = GwSolveParams { init: Init::Diagonal, epsilon: 1e-3, ..GwSolveParams::default() };
    let r = gw_entropic(&x, &x, &params).unwrap();
    let d4 = p_diameter(&x, 4.0).unwrap();
    assert!(r.value >= 0.0 && r.value < 0.05 * d4, "{} vs diam {d4}", r.value);
}

#[test]
fn entropic_large_epsilon_approaches_product() {
    let x = unit_space(1, 10, 1, MetricKind::Euclidean);
    let y = unit_space(2, 12, 2, MetricKind::Euclidean);
    let params = GwSolveParams { epsilon: 1e4, ..GwSolveParams::default() };
    let r = gw_entropic(&x, &y, &params).unwrap();
    let prod = distortion_pq(&x, &y, &Coupling::product(x.weights(), y.weights()), PqParams::four_two()).unwrap();
    assert!((r.value - prod).abs() <= 0.01 * prod, "{} vs {prod}", r.value);
}

#[test]
fn multistart_agrees_with_bruteforce() {
    for k in 0..4u64 {
        let x = unit_space(1, 2, 10 + k, MetricKind::Euclidean);
        let y = unit_space(2, 3, 20 + k, MetricKind::Geodesic);
        let bf = gw_bruteforce_small(&x, &y, PqParams::four_two(), 2000).unwrap();
        let ms = multistart(&x, &y, &GwSolveParams::default(), 8, k).unwrap();
        assert!(ms.value <= bf.value + 1e-3 && ms.value >= bf.value - 1e-2, "{} vs {}", ms.value, bf.value);
        assert!(bf.grid_points > 0);
    }
}

#[test]
fn generic_loss_size_cap() {
    let x = unit_space(1, 101, 1, MetricKind::Euclidean);
    let y = unit_space(1, 100, 2, MetricKind::Euclidean);
    let params = GwSolveParams::with_pq(PqParams::new(3.0, 1.0).unwrap());
    assert!(matches!(gw_cgd(&x, &y, &params), Err(Error::Size(_))));
}

#[test]
fn rejects_bad_parameters() {
    let x = unit_space(1, 5, 1, MetricKind::Euclidean);
    let bad_eps = GwSolveParams { epsilon: 0.0, ..GwSolveParams::default() };
    assert!(gw_entropic(&x, &x, &bad_eps).is_err());
    let bad_iter = GwSolveParams { max_iter: 0, ..GwSolveParams::default() };
    assert!(gw_cgd(&x, &x, &bad_iter).is_err());
}

#[test]
fn report_json_has_trace_on_request() {
    let x = unit_space(1, 5, 1, MetricKind::Euclidean);
    let y = unit_space(2, 5, 2, MetricKind::Euclidean);
    let r = gw_cgd(&x, &y, &GwSolveParams::default()).unwrap();
    let with: serde_json::Value = serde_json::from_str(&r.to_json(true).unwrap()).unwrap();
    let without: serde_json::Value = serde_json::from_str(&r.to_json(false).unwrap()).unwrap();
    assert!(with.get("trace").is_some());
    assert!(without.get("trace").is_none());
}
