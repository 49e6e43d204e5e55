mod common;

use common::*;
use gw_core::sampling::*;
use gw_core::*;
use ndarray::{s, Array1};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fps_covering_certificate(n in 1usize..4, size in 20usize..120, k in 1usize..20, seed in any::<u64>()) {
        let cloud = sample_sphere_uniform(n, size, Seed(seed)).unwrap();
        for metric in [MetricKind::Geodesic, MetricKind::Euclidean] {
            let chosen = farthest_point_sample(&cloud, k.min(size), metric, Seed(seed ^ 1)).unwrap();
            let c = cloud.coords();
            let dist_to_set = |i: usize, upto: usize| {
                chosen[..upto].iter().map(|&j| metric.distance(c.row(i), c.row(j))).fold(f64::INFINITY, f64::min)
            };
            let mut radii = Vec::new();
            for t in 1..chosen.len() {
                radii.push(dist_to_set(chosen[t], t));
            }
            for w in radii.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-15);
            }
            if chosen.len() < size {
                let radius = (0..size).map(|i| dist_to_set(i, chosen.len())).fold(0.0, f64::max);
                if let Some(&last) = radii.last() {
                    prop_assert!(radius <= last + 1e-15, "cover radius {radius} above selection radius {last}");
                }
            }
            let mut sorted = chosen.clone();
            sorted.sort_unstable();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), chosen.len());
        }
    }

    #[test]
    fn equatorial_map_idempotent(n in 1usize..6, m_raw in 0usize..6, seed in any::<u64>()) {
        let m = m_raw % (n + 1);
        let cloud = sample_sphere_uniform(n, 10, Seed(seed)).unwrap();
        for y in cloud.coords().rows() {
            let Some(e) = equatorial_map(y, m).unwrap() else { continue };
            let mut padded = Array1::zeros(n + 1);
            padded.slice_mut(s![..=m]).assign(&e);
            let again = equatorial_map(padded.view(), m).unwrap().unwrap();
            for (a, b) in again.iter().zip(e.iter()) {
                prop_assert!((a - b).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn voronoi_cells_of_fps_landmarks_are_nonempty(n in 1usize..4, k in 2usize..30, seed in any::<u64>()) {
        let reference = sample_sphere_uniform(n, 3000, Seed(seed)).unwrap();
        let idx = farthest_point_sample(&reference, k, MetricKind::Euclidean, Seed(seed ^ 2)).unwrap();
        let w = voronoi_weights_from(&reference.select(&idx), &reference).unwrap();
        prop_assert!(w.iter().all(|&v| v > 0.0));
        prop_assert!((w.sum() - 1.0).abs() < 1e-12);
        let streamed = voronoi_weights(&reference.select(&idx), 3000, Seed(seed)).unwrap();
        prop_assert_eq!(streamed, w);
    }
}

fn ks_statistic(mut samples: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let f = cdf(t);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn pair_distances_follow_sphere_cdf() {
    for n in 1..=3 {
        for metric in [MetricKind::Geodesic, MetricKind::Euclidean] {
            let cloud = sample_sphere_uniform(n, 2000, Seed(100 + n as u64)).unwrap();
            let c = cloud.coords();
            let d: Vec<f64> = (0..1000).map(|k| metric.distance(c.row(2 * k), c.row(2 * k + 1))).collect();
            let spec = SphereSpec::new(n, metric);
            let ks = ks_statistic(d, |t| spec.cdf(t.min(spec.diameter())).unwrap());
            assert!(ks < 1.63 / 1000f64.sqrt(), "n={n} {metric:?}: KS {ks}");
        }
    }
}

#[test]
fn samples_are_unit_and_reproducible() {
    let a = sample_sphere_uniform(3, 500, Seed(9)).unwrap();
    let b = sample_sphere_uniform(3, 500, Seed(9)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, sample_sphere_uniform(3, 500, Seed(10)).unwrap());
    for r in a.coords().rows() {
        assert!((r.dot(&r) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn squared_inner_product_moment() {
    for n in [1usize, 2, 4] {
        let cloud = sample_sphere_uniform(n, 40_000, Seed(n as u64)).unwrap();
        let c = cloud.coords();
        let v: Vec<f64> = (0..20_000).map(|k| c.row(2 * k).dot(&c.row(2 * k + 1)).powi(2)).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        let se = sd / (v.len() as f64).sqrt();
        assert!((mean - 1.0 / (n as f64 + 1.0)).abs() <= 3.0 * se, "n={n}: {mean} ± {se}");
    }
}

#[test]
fn equatorial_coupling_matches_closed_form() {
    let cloud = sample_sphere_nondegenerate(2, 1, 1500, Seed(4)).unwrap();
    let (x, y, g) = equatorial_coupling_empirical(&cloud, 1, MetricKind::Euclidean).unwrap();
    let est = diagonal_distortion_with_se(&x, &y, PqParams::four_two()).unwrap();
    let exact = gw_core::sphere::equatorial_dis42_euclidean(1, 2).unwrap();
    assert!((est.value - exact).abs() <= 4.0 * est.std_error, "{} ± {} vs {exact}", est.value, est.std_error);
    let direct = distortion_pq(&x, &y, &g, PqParams::four_two()).unwrap();
    assert!(rel_close(direct, est.value, 1e-12));
}

#[test]
fn seed_derivation() {
    assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    let s = Seed(42);
    assert_eq!(s.derive(3), s.derive(3));
    assert_ne!(s.derive(3), s.derive(4));
    assert_eq!(s.derive_path(&[1, 2]), s.derive(1).derive(2));
}

#[test]
fn csv_round_trip_preserves_bits() {
    let c = sample_sphere_uniform(2, 17, Seed(3)).unwrap();
    let mut buf = Vec::new();
    c.write_csv(&mut buf).unwrap();
    assert_eq!(PointCloud::read_csv(buf.as_slice(), true).unwrap(), c);
    let space = c.to_space_uniform(MetricKind::Geodesic).unwrap();
    assert_eq!(FiniteMMSpace::from_json(&space.to_json().unwrap()).unwrap(), space);
}

#[test]
fn fps_rejects_bad_k() {
    let c = sample_sphere_uniform(1, 5, Seed(1)).unwrap();
    assert!(farthest_point_sample(&c, 0, MetricKind::Geodesic, Seed(0)).is_err());
    assert!(farthest_point_sample(&c, 6, MetricKind::Geodesic, Seed(0)).is_err());
}
