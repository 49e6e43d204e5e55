//! Finite metric-measure spaces.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

pub const WEIGHT_SUM_TOL: f64 = 1e-12;
pub const COORD_DIST_TOL: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-12;

/// Metric carried by points on a unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    /// Great-circle distance, arccos of the clamped inner product.
    Geodesic,
    /// Chordal distance in the ambient space.
    Euclidean,
}

impl MetricKind {
    /// Distance between two rows. Geodesic assumes unit vectors.
    pub fn distance(self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
        match self {
            MetricKind::Euclidean => x
                .iter()
                .zip(y.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
            MetricKind::Geodesic => x.dot(&y).clamp(-1.0, 1.0).acos(),
        }
    }

    /// Diameter of the unit sphere under this metric.
    pub fn sphere_diameter(self) -> f64 {
        match self {
            MetricKind::Geodesic => std::f64::consts::PI,
            MetricKind::Euclidean => 2.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Geodesic => "geodesic",
            MetricKind::Euclidean => "euclidean",
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "geodesic" | "g" => Ok(MetricKind::Geodesic),
            "euclidean" | "e" => Ok(MetricKind::Euclidean),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

/// Pairwise distance matrix of the rows of `coords`.
pub fn pairwise_distances(coords: ArrayView2<f64>, metric: MetricKind) -> Array2<f64> {
    let n = coords.nrows();
    let mut dist = Array2::zeros((n, n));
    for i in 0..n {
        for k in (i + 1)..n {
            let d = metric.distance(coords.row(i), coords.row(k));
            dist[[i, k]] = d;
            dist[[k, i]] = d;
        }
    }
    dist
}

/// A finite metric-measure space: symmetric distance matrix plus probability weights,
/// optionally with the ambient coordinates that generated the distances.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMMSpace {
    dist: Array2<f64>,
    weights: Array1<f64>,
    coords: Option<Array2<f64>>,
    metric: Option<MetricKind>,
}

impl FiniteMMSpace {
    pub fn new(dist: Array2<f64>, weights: Array1<f64>) -> Result<Self> {
        validate_dist(&dist)?;
        validate_weights(&weights, dist.nrows())?;
        Ok(Self { dist, weights, coords: None, metric: None })
    }

    /// Builds the distance matrix from coordinates under `metric`.
    pub fn from_coords(coords: Array2<f64>, metric: MetricKind, weights: Array1<f64>) -> Result<Self> {
        if coords.nrows() == 0 {
            return Err(domain("a metric-measure space needs at least one point"));
        }
        if metric == MetricKind::Geodesic {
            check_unit_rows(coords.view(), COORD_DIST_TOL)?;
        }
        validate_weights(&weights, coords.nrows())?;
        let dist = pairwise_distances(coords.view(), metric);
        Ok(Self { dist, weights, coords: Some(coords), metric: Some(metric) })
    }

    /// Attaches coordinates to an explicit distance matrix, checking they agree.
    pub fn with_coords(
        dist: Array2<f64>,
        weights: Array1<f64>,
        coords: Array2<f64>,
        metric: MetricKind,
    ) -> Result<Self> {
        validate_dist(&dist)?;
        validate_weights(&weights, dist.nrows())?;
        if coords.nrows() != dist.nrows() {
            return Err(domain(format!(
                "coords have {} rows but the space has {} points",
                coords.nrows(),
                dist.nrows()
            )));
        }
        let expect = pairwise_distances(coords.view(), metric);
        let worst = max_abs_diff(&expect, &dist);
        if worst > COORD_DIST_TOL {
            return Err(domain(format!(
                "distance matrix disagrees with {} distances of coords by {worst:e}",
                metric.name()
            )));
        }
        Ok(Self { dist, weights, coords: Some(coords), metric: Some(metric) })
    }

    pub fn uniform_weights(n: usize) -> Array1<f64> {
        Array1::from_elem(n, 1.0 / n as f64)
    }

    pub fn one_point() -> Self {
        Self::new(Array2::zeros((1, 1)), Array1::ones(1)).expect("one-point space is valid")
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dist(&self) -> &Array2<f64> {
        &self.dist
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn coords(&self) -> Option<&Array2<f64>> {
        self.coords.as_ref()
    }

    pub fn metric(&self) -> Option<MetricKind> {
        self.metric
    }

    /// Same points and distances with new weights.
    pub fn reweighted(&self, weights: Array1<f64>) -> Result<Self> {
        validate_weights(&weights, self.len())?;
        Ok(Self { weights, ..self.clone() })
    }

    /// Multiplies all distances by `factor > 0` and drops coordinates.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(domain(format!("scale factor must be positive, got {factor}")));
        }
        Self::new(self.dist.mapv(|d| d * factor), self.weights.clone())
    }

    /// Optional check of the triangle inequality, off by default in constructors.
    pub fn satisfies_triangle_inequality(&self, tol: f64) -> bool {
        let n = self.len();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if self.dist[[i, j]] > self.dist[[i, k]] + self.dist[[k, j]] + tol {
                        return false;
                    }
                }
            }
        }
        true
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = SpaceDoc {
            n: self.len(),
            dist: rows_of(&self.dist),
            weights: self.weights.iter().map(|&w| Real(w)).collect(),
            coords: self.coords.as_ref().map(rows_of),
            metric: self.metric,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Reads the `{"n", "dist", "weights", "coords"?}` document. Reals may be JSON
    /// numbers or decimal strings. When coords are present without a `metric` field
    /// the metric is inferred from the distances.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SpaceDoc = serde_json::from_str(text)?;
        let dist = matrix_from_rows(&doc.dist, "dist")?;
        if dist.nrows() != doc.n {
            return Err(Error::Format(format!("n = {} but dist has {} rows", doc.n, dist.nrows())));
        }
        let weights: Array1<f64> = doc.weights.iter().map(|r| r.0).collect();
        match doc.coords {
            None => Self::new(dist, weights),
            Some(rows) => {
                let coords = matrix_from_rows(&rows, "coords")?;
                match doc.metric {
                    Some(metric) => Self::with_coords(dist, weights, coords, metric),
                    None => Self::with_coords(dist.clone(), weights.clone(), coords.clone(), MetricKind::Euclidean)
                        .or_else(|_| Self::with_coords(dist, weights, coords, MetricKind::Geodesic)),
                }
            }
        }
    }
}

fn validate_dist(dist: &Array2<f64>) -> Result<()> {
    let n = dist.nrows();
    if n == 0 || dist.ncols() != n {
        return Err(domain(format!("distance matrix must be square and nonempty, got {:?}", dist.shape())));
    }
    for i in 0..n {
        if dist[[i, i]] != 0.0 {
            return Err(domain(format!("nonzero diagonal entry dist[{i}][{i}] = {}", dist[[i, i]])));
        }
        for k in 0..n {
            let d = dist[[i, k]];
            if !(d >= 0.0) || !d.is_finite() {
                return Err(domain(format!("invalid distance dist[{i}][{k}] = {d}")));
            }
            if (d - dist[[k, i]]).abs() > SYMMETRY_TOL * (1.0 + d.abs()) {
                return Err(domain(format!("distance matrix not symmetric at ({i}, {k})")));
            }
        }
    }
    Ok(())
}

pub(crate) fn validate_weights(weights: &Array1<f64>, n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(domain(format!("expected {n} weights, got {}", weights.len())));
    }
    if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(**w >= 0.0) || !w.is_finite()) {
        return Err(domain(format!("weight {i} is invalid: {w}")));
    }
    let total: f64 = weights.sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(domain(format!("weights sum to {total}, expected 1")));
    }
    Ok(())
}

pub(crate) fn check_unit_rows(coords: ArrayView2<f64>, tol: f64) -> Result<()> {
    for (i, row) in coords.axis_iter(Axis(0)).enumerate() {
        let norm = row.dot(&row).sqrt();
        if (norm - 1.0).abs() > tol {
            return Err(domain(format!("row {i} has norm {norm}, expected a unit vector")));
        }
    }
    Ok(())
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// A real that reads from a JSON number or a decimal string and writes as a number.
#[derive(Debug, Clone, Copy)]
struct Real(f64);

impl Serialize for Real {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Real(v)),
            Raw::Text(t) => t.trim().parse::<f64>().map(Real).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SpaceDoc {
    n: usize,
    dist: Vec<Vec<Real>>,
    weights: Vec<Real>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coords: Option<Vec<Vec<Real>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metric: Option<MetricKind>,
}

fn rows_of(m: &Array2<f64>) -> Vec<Vec<Real>> {
    m.axis_iter(Axis(0)).map(|r| r.iter().map(|&v| Real(v)).collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<Real>], what: &str) -> Result<Array2<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Format(format!("{what} rows have unequal lengths")));
    }
    let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().map(|v| v.0)).collect();
    Array2::from_shape_vec((nrows, ncols), flat).map_err(|e| Error::Format(e.to_string()))
}
