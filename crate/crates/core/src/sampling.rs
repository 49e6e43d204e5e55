//! Sphere sampling, farthest point sampling, Voronoi weights and the equatorial map.
//!
//! Randomness comes from `ChaCha8Rng::seed_from_u64`, which is specified
//! independently of platform, so a seed reproduces the same cloud everywhere.

use std::io::{Read, Write};

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::coupling::Coupling;
use crate::error::{domain, Error, Result};
use crate::lambda::{lambda_pow, PqParams};
use crate::space::{check_unit_rows, FiniteMMSpace, MetricKind};
use crate::sphere::McEstimate;

/// Leading-block norms below this are treated as landing in the degenerate set.
pub const DEGENERATE_TOL: f64 = 1e-12;
const UNIT_TOL: f64 = 1e-10;

/// SplitMix64 finaliser, used to derive independent seeds.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Seed {
    /// Child seed for an indexed sub-stream.
    pub fn derive(self, stream: u64) -> Seed {
        Seed(splitmix64(self.0 ^ splitmix64(stream)))
    }

    /// Child seed for a path of indices, applied left to right.
    pub fn derive_path(self, path: &[u64]) -> Seed {
        path.iter().fold(self, |s, &k| s.derive(k))
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

/// Points in R^{d+1}, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    coords: Array2<f64>,
    on_sphere: bool,
}

impl PointCloud {
    pub fn new(coords: Array2<f64>, on_sphere: bool) -> Result<Self> {
        if coords.nrows() == 0 || coords.ncols() == 0 {
            return Err(domain("a point cloud needs at least one point and one coordinate"));
        }
        if on_sphere {
            check_unit_rows(coords.view(), UNIT_TOL)?;
        }
        Ok(Self { coords, on_sphere })
    }

    pub fn coords(&self) -> &Array2<f64> {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.nrows() == 0
    }

    pub fn ambient_dim(&self) -> usize {
        self.coords.ncols()
    }

    pub fn on_sphere(&self) -> bool {
        self.on_sphere
    }

    pub fn select(&self, idx: &[usize]) -> PointCloud {
        PointCloud { coords: self.coords.select(Axis(0), idx), on_sphere: self.on_sphere }
    }

    pub fn to_space(&self, metric: MetricKind, weights: Array1<f64>) -> Result<FiniteMMSpace> {
        FiniteMMSpace::from_coords(self.coords.clone(), metric, weights)
    }

    pub fn to_space_uniform(&self, metric: MetricKind) -> Result<FiniteMMSpace> {
        self.to_space(metric, FiniteMMSpace::uniform_weights(self.len()))
    }

    /// One point per row, no header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for row in self.coords.axis_iter(Axis(0)) {
            w.write_record(row.iter().map(|v| format!("{v:.16e}"))).map_err(|e| Error::Format(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, on_sphere: bool) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(input);
        let mut flat = Vec::new();
        let mut ncols = None;
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
            if *ncols.get_or_insert(rec.len()) != rec.len() {
                return Err(Error::Format("rows have unequal lengths".into()));
            }
            for field in rec.iter() {
                flat.push(field.parse::<f64>().map_err(|e| Error::Format(format!("{field:?}: {e}")))?);
            }
        }
        let ncols = ncols.ok_or_else(|| Error::Format("empty point cloud".into()))?;
        let coords = Array2::from_shape_vec((flat.len() / ncols, ncols), flat).map_err(|e| Error::Format(e.to_string()))?;
        Self::new(coords, on_sphere)
    }
}

fn gaussian_row(rng: &mut ChaCha8Rng, dim: usize) -> Array1<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit_row(rng: &mut ChaCha8Rng, dim: usize) -> Array1<f64> {
    loop {
        let g = gaussian_row(rng, dim);
        let norm = g.dot(&g).sqrt();
        if norm > 0.0 {
            return g / norm;
        }
    }
}

/// `count` i.i.d. uniform points on 𝕊ⁿ ⊂ R^{n+1} via normalized Gaussian vectors.
pub fn sample_sphere_uniform(n: usize, count: usize, seed: Seed) -> Result<PointCloud> {
    if count == 0 {
        return Err(domain("sample count must be at least 1"));
    }
    let mut rng = seed.rng();
    let mut coords = Array2::zeros((count, n + 1));
    for mut row in coords.axis_iter_mut(Axis(0)) {
        row.assign(&unit_row(&mut rng, n + 1));
    }
    PointCloud::new(coords, true)
}

/// Greedy farthest point sampling. The first index is drawn uniformly from the seed;
/// every later index maximises the distance to the selected set, ties going to the
/// lowest index.
pub fn farthest_point_sample(cloud: &PointCloud, k: usize, metric: MetricKind, seed: Seed) -> Result<Vec<usize>> {
    let n = cloud.len();
    if k == 0 || k > n {
        return Err(domain(format!("k must lie in [1, {n}], got {k}")));
    }
    let first = seed.rng().random_range(0..n);
    Ok(farthest_point_sample_from(cloud, k, metric, first))
}

/// FPS with a fixed first index.
pub fn farthest_point_sample_from(cloud: &PointCloud, k: usize, metric: MetricKind, first: usize) -> Vec<usize> {
    let c = cloud.coords();
    let n = cloud.len();
    let mut chosen = Vec::with_capacity(k);
    let mut min_d = vec![f64::INFINITY; n];
    let mut next = first;
    for _ in 0..k {
        chosen.push(next);
        let p = c.row(next);
        for i in 0..n {
            let d = metric.distance(p, c.row(i));
            if d < min_d[i] {
                min_d[i] = d;
            }
        }
        min_d[next] = f64::NEG_INFINITY;
        let mut best = f64::NEG_INFINITY;
        for (i, &d) in min_d.iter().enumerate() {
            if d > best {
                best = d;
                next = i;
            }
        }
    }
    chosen
}

/// Cell masses of the landmarks' Voronoi partition of the sphere, estimated from
/// `reference_size` uniform points drawn sequentially from `seed`. Nearest means the
/// largest inner product, which orders the geodesic and chordal metrics identically.
pub fn voronoi_weights(landmarks: &PointCloud, reference_size: usize, seed: Seed) -> Result<Array1<f64>> {
    if landmarks.is_empty() {
        return Err(domain("no landmarks"));
    }
    if reference_size == 0 {
        return Err(domain("reference_size must be at least 1"));
    }
    let dim = landmarks.ambient_dim();
    let lm = landmarks.coords();
    let mut rng = seed.rng();
    let mut counts = vec![0u64; landmarks.len()];
    for _ in 0..reference_size {
        let x = unit_row(&mut rng, dim);
        counts[nearest_landmark(lm, x.view())] += 1;
    }
    let total = reference_size as f64;
    Ok(counts.into_iter().map(|c| c as f64 / total).collect())
}

/// Cell masses estimated by counting an explicit reference cloud.
pub fn voronoi_weights_from(landmarks: &PointCloud, reference: &PointCloud) -> Result<Array1<f64>> {
    if landmarks.is_empty() {
        return Err(domain("no landmarks"));
    }
    if landmarks.ambient_dim() != reference.ambient_dim() {
        return Err(domain("landmarks and reference live in different dimensions"));
    }
    let lm = landmarks.coords();
    let mut counts = vec![0u64; landmarks.len()];
    for x in reference.coords().axis_iter(Axis(0)) {
        counts[nearest_landmark(lm, x)] += 1;
    }
    let total = reference.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / total).collect())
}

pub(crate) fn nearest_landmark(lm: &Array2<f64>, x: ArrayView1<f64>) -> usize {
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for (i, row) in lm.axis_iter(Axis(0)).enumerate() {
        let ip = row.dot(&x);
        if ip > best {
            best = ip;
            arg = i;
        }
    }
    arg
}

/// e_{n,m}(y): the normalized leading (m+1)-block of a unit vector y ∈ R^{n+1}.
/// Returns `None` when that block is numerically zero.
pub fn equatorial_map(y: ArrayView1<f64>, m: usize) -> Result<Option<Array1<f64>>> {
    let norm = y.dot(&y).sqrt();
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(domain(format!("equatorial map needs a unit vector, got norm {norm}")));
    }
    if m >= y.len() {
        return Err(domain(format!("m = {m} must be below the ambient dimension {}", y.len())));
    }
    if m + 1 == y.len() {
        return Ok(Some(y.to_owned()));
    }
    let lead = y.slice(s![..=m]);
    let lead_norm = lead.dot(&lead).sqrt();
    if lead_norm < DEGENERATE_TOL {
        return Ok(None);
    }
    Ok(Some(lead.to_owned() / lead_norm))
}

/// Pairs each sample y_i on 𝕊ⁿ with e_{n,m}(y_i) on 𝕊ᵐ and returns both spaces with
/// uniform weights and the diagonal coupling between them.
pub fn equatorial_coupling_empirical(
    samples: &PointCloud,
    m: usize,
    metric: MetricKind,
) -> Result<(FiniteMMSpace, FiniteMMSpace, Coupling)> {
    let n_pts = samples.len();
    let mut proj = Array2::zeros((n_pts, m + 1));
    for (i, y) in samples.coords().axis_iter(Axis(0)).enumerate() {
        match equatorial_map(y, m)? {
            Some(x) => proj.row_mut(i).assign(&x),
            None => return Err(Error::Degenerate(i)),
        }
    }
    let w = FiniteMMSpace::uniform_weights(n_pts);
    let x = FiniteMMSpace::from_coords(proj, metric, w.clone())?;
    let y = FiniteMMSpace::from_coords(samples.coords().clone(), metric, w.clone())?;
    let gamma = Coupling::diagonal(&w, &w)?;
    Ok((x, y, gamma))
}

/// Uniform samples on 𝕊ⁿ with degenerate equatorial points redrawn.
pub fn sample_sphere_nondegenerate(n: usize, m: usize, count: usize, seed: Seed) -> Result<PointCloud> {
    if count == 0 {
        return Err(domain("sample count must be at least 1"));
    }
    let mut rng = seed.rng();
    let mut coords = Array2::zeros((count, n + 1));
    for mut row in coords.axis_iter_mut(Axis(0)) {
        loop {
            let y = unit_row(&mut rng, n + 1);
            let lead = y.slice(s![..=m.min(n)]);
            if lead.dot(&lead).sqrt() >= DEGENERATE_TOL {
                row.assign(&y);
                break;
            }
        }
    }
    PointCloud::new(coords, true)
}

/// dis_{p,q} of the diagonal coupling between two equally sized uniform spaces as a
/// V-statistic, with its standard error from the first-order projection
/// (2·sd(row means)/√N) carried through the p-th root.
pub fn diagonal_distortion_with_se(x: &FiniteMMSpace, y: &FiniteMMSpace, pq: PqParams) -> Result<McEstimate> {
    let n = x.len();
    if y.len() != n || n < 2 {
        return Err(domain("spaces must have the same size, at least 2"));
    }
    if !pq.p.is_finite() {
        return Err(domain("needs finite p"));
    }
    let (dx, dy) = (x.dist(), y.dist());
    let rows: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|k| lambda_pow(dx[[i, k]], dy[[i, k]], pq.p, pq.q)).sum::<f64>() / n as f64)
        .collect();
    let mean = rows.iter().sum::<f64>() / n as f64;
    let var = rows.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n as f64 - 1.0);
    let se_mean = 2.0 * (var / n as f64).sqrt();
    let value = mean.powf(1.0 / pq.p);
    let std_error = if mean > 0.0 { se_mean * mean.powf(1.0 / pq.p - 1.0) / pq.p } else { 0.0 };
    Ok(McEstimate { value, std_error, samples: n })
}

/// J(γ) = ‖M_γ‖²_F for the empirical Gaussian projection coupling: `count` standard
/// Gaussian vectors y ∈ R^{n+1}, each paired with its leading (m+1)-block. The
/// standard error linearises J around M̂ (sample sd of 2 x_iᵀ M̂ y_i over √N).
pub fn gaussian_projection_j(m: usize, n: usize, count: usize, seed: Seed) -> Result<McEstimate> {
    if m > n {
        return Err(domain(format!("expected m <= n, got m = {m}, n = {n}")));
    }
    if count < 2 {
        return Err(domain("need at least two samples"));
    }
    let mut rng = seed.rng();
    let mut ys = Array2::zeros((count, n + 1));
    for mut row in ys.axis_iter_mut(Axis(0)) {
        row.assign(&gaussian_row(&mut rng, n + 1));
    }
    let xs = ys.slice(s![.., ..=m]).to_owned();
    let mhat = xs.t().dot(&ys) / count as f64;
    let j: f64 = mhat.iter().map(|v| v * v).sum();
    let s: Vec<f64> = (0..count).map(|i| 2.0 * xs.row(i).dot(&mhat.dot(&ys.row(i)))).collect();
    let mean = s.iter().sum::<f64>() / count as f64;
    let var = s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count as f64 - 1.0);
    Ok(McEstimate { value: j, std_error: (var / count as f64).sqrt(), samples: count })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn sphere_samples_are_unit() {
        let c = sample_sphere_uniform(3, 100, Seed(1)).unwrap();
        for row in c.coords().axis_iter(Axis(0)) {
            assert!((row.dot(&row) - 1.0).abs() < 1e-12);
        }
        let zero = sample_sphere_uniform(0, 1000, Seed(2)).unwrap();
        let plus = zero.coords().iter().filter(|v| **v == 1.0).count();
        assert!(zero.coords().iter().all(|v| v.abs() == 1.0));
        assert!((plus as f64 - 500.0).abs() < 3.0 * 250f64.sqrt());
        assert!(sample_sphere_uniform(2, 0, Seed(0)).is_err());
    }

    #[test]
    fn same_seed_same_cloud() {
        assert_eq!(sample_sphere_uniform(2, 50, Seed(9)).unwrap(), sample_sphere_uniform(2, 50, Seed(9)).unwrap());
        assert_ne!(sample_sphere_uniform(2, 50, Seed(9)).unwrap(), sample_sphere_uniform(2, 50, Seed(10)).unwrap());
    }

    #[test]
    fn fps_square_corners() {
        let sq = PointCloud::new(array![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], false).unwrap();
        assert_eq!(farthest_point_sample_from(&sq, 2, MetricKind::Euclidean, 0), vec![0, 2]);
        let mut all = farthest_point_sample(&sq, 4, MetricKind::Euclidean, Seed(3)).unwrap();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3]);
        assert!(farthest_point_sample(&sq, 5, MetricKind::Euclidean, Seed(3)).is_err());
    }

    #[test]
    fn voronoi_basics() {
        let one = PointCloud::new(array![[1.0, 0.0]], true).unwrap();
        assert_eq!(voronoi_weights(&one, 100, Seed(0)).unwrap(), array![1.0]);
        let two = PointCloud::new(array![[1.0, 0.0], [-1.0, 0.0]], true).unwrap();
        let w = voronoi_weights(&two, 10_000, Seed(4)).unwrap();
        assert_eq!(w.sum(), 1.0);
        assert!((w[0] - 0.5).abs() < 3.0 * (0.25f64 / 10_000.0).sqrt());
    }

    #[test]
    fn equatorial_map_cases() {
        let e = equatorial_map(array![0.6, 0.0, 0.8].view(), 1).unwrap().unwrap();
        assert!((&e - &array![1.0, 0.0]).iter().all(|d| d.abs() < 1e-15));
        assert!(equatorial_map(array![0.0, 0.0, 1.0].view(), 1).unwrap().is_none());
        let y = array![0.6, 0.8, 0.0];
        assert_eq!(equatorial_map(y.view(), 1).unwrap().unwrap(), array![0.6, 0.8]);
        assert!(equatorial_map(array![1.0, 1.0, 0.0].view(), 1).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let c = sample_sphere_uniform(2, 5, Seed(5)).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let back = PointCloud::read_csv(buf.as_slice(), true).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn equatorial_identity_when_m_equals_n() {
        let c = sample_sphere_uniform(2, 30, Seed(6)).unwrap();
        let (x, y, g) = equatorial_coupling_empirical(&c, 2, MetricKind::Euclidean).unwrap();
        assert_eq!(crate::distortion::distortion_pq(&x, &y, &g, PqParams::four_two()).unwrap(), 0.0);
    }

    #[test]
    fn splitmix_known_value() {
        // First output of the reference SplitMix64 stream seeded with 0.
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }
}
