//! Couplings between two finite probability vectors.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{domain, precondition, Result};

/// Relative tolerance on row and column sums.
pub const MARGINAL_REL_TOL: f64 = 1e-8;
/// Absolute tolerance on the total mass.
pub const MASS_TOL: f64 = 1e-12;

/// A nonnegative n×m matrix together with the marginals it is meant to couple.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    gamma: Array2<f64>,
    mu: Array1<f64>,
    nu: Array1<f64>,
}

impl Coupling {
    /// Checked constructor; fails when [`validate_coupling`] reports a violation.
    pub fn new(gamma: Array2<f64>, mu: Array1<f64>, nu: Array1<f64>) -> Result<Self> {
        let c = Self::from_parts_unchecked(gamma, mu, nu)?;
        let report = validate_coupling(&c);
        if !report.ok {
            return Err(precondition(format!("invalid coupling: {}", report.summary())));
        }
        Ok(c)
    }

    /// Stores the parts after a shape check only. Solvers use this for iterates that
    /// are feasible up to rounding.
    pub fn from_parts_unchecked(gamma: Array2<f64>, mu: Array1<f64>, nu: Array1<f64>) -> Result<Self> {
        if gamma.nrows() != mu.len() || gamma.ncols() != nu.len() {
            return Err(domain(format!(
                "coupling shape {:?} does not match marginals ({}, {})",
                gamma.shape(),
                mu.len(),
                nu.len()
            )));
        }
        Ok(Self { gamma, mu, nu })
    }

    /// Coupling whose marginals are read off the matrix itself.
    pub fn from_matrix(gamma: Array2<f64>) -> Result<Self> {
        let mu = gamma.sum_axis(Axis(1));
        let nu = gamma.sum_axis(Axis(0));
        Self::new(gamma, mu, nu)
    }

    pub fn product(mu: &Array1<f64>, nu: &Array1<f64>) -> Self {
        let gamma = Array2::from_shape_fn((mu.len(), nu.len()), |(i, j)| mu[i] * nu[j]);
        Self { gamma, mu: mu.clone(), nu: nu.clone() }
    }

    /// diag(mu); requires equal sizes and equal marginals.
    pub fn diagonal(mu: &Array1<f64>, nu: &Array1<f64>) -> Result<Self> {
        if mu.len() != nu.len() {
            return Err(precondition("diagonal coupling needs spaces of equal size"));
        }
        if mu.iter().zip(nu.iter()).any(|(a, b)| (a - b).abs() > MARGINAL_REL_TOL * a.abs().max(b.abs()).max(1e-300)) {
            return Err(precondition("diagonal coupling needs equal marginals"));
        }
        Ok(Self { gamma: Array2::from_diag(mu), mu: mu.clone(), nu: nu.clone() })
    }

    pub fn transpose(&self) -> Self {
        Self { gamma: self.gamma.t().to_owned(), mu: self.nu.clone(), nu: self.mu.clone() }
    }

    pub fn gamma(&self) -> &Array2<f64> {
        &self.gamma
    }

    pub fn mu(&self) -> &Array1<f64> {
        &self.mu
    }

    pub fn nu(&self) -> &Array1<f64> {
        &self.nu
    }

    pub fn rows(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn cols(&self) -> usize {
        self.gamma.ncols()
    }

    pub fn into_gamma(self) -> Array2<f64> {
        self.gamma
    }

    /// Row-major CSV dump of the matrix, one row per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.gamma.axis_iter(Axis(0)) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Outcome of [`validate_coupling`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub ok: bool,
    /// Largest row or column sum deviation, relative to the marginal entry.
    pub worst_marginal_deviation: f64,
    /// Index of the worst marginal as `("row" | "col", index)`.
    pub worst_marginal: Option<(String, usize)>,
    pub min_entry: f64,
    pub total_mass: f64,
    pub violations: Vec<String>,
}

impl CouplingReport {
    pub fn summary(&self) -> String {
        if self.ok {
            "ok".into()
        } else {
            self.violations.join("; ")
        }
    }
}

/// Checks nonnegativity, total mass and both marginals.
pub fn validate_coupling(c: &Coupling) -> CouplingReport {
    validate_with_tol(c, MARGINAL_REL_TOL)
}

pub fn validate_with_tol(c: &Coupling, rel_tol: f64) -> CouplingReport {
    let mut violations = Vec::new();
    let min_entry = c.gamma.iter().copied().fold(f64::INFINITY, f64::min);
    if c.gamma.iter().any(|v| !v.is_finite()) {
        violations.push("non-finite entry".to_string());
    }
    if min_entry < 0.0 {
        violations.push(format!("negativity: min entry {min_entry:e}"));
    }
    let total_mass = c.gamma.sum();
    if (total_mass - 1.0).abs() > MASS_TOL {
        violations.push(format!("mass: total {total_mass}"));
    }
    let mut worst = 0.0_f64;
    let mut worst_at = None;
    let rows = c.gamma.sum_axis(Axis(1));
    let cols = c.gamma.sum_axis(Axis(0));
    for (kind, sums, target) in [("row", &rows, &c.mu), ("col", &cols, &c.nu)] {
        for (i, (s, t)) in sums.iter().zip(target.iter()).enumerate() {
            // Zero-weight atoms are compared absolutely.
            let dev = if *t == 0.0 { s.abs() } else { (s - t).abs() / t.abs() };
            if worst_at.is_none() || dev > worst {
                worst = dev;
                worst_at = Some((kind.to_string(), i));
            }
        }
    }
    if worst > rel_tol {
        let (kind, i) = worst_at.clone().unwrap_or_default();
        violations.push(format!("marginal: {kind} {i} off by relative {worst:e}"));
    }
    CouplingReport {
        ok: violations.is_empty(),
        worst_marginal_deviation: worst,
        worst_marginal: worst_at,
        min_entry,
        total_mass,
        violations,
    }
}
