//! Distance distributions, the 1D Wasserstein distance on (R+, Λ_q) and the
//! DLB / SLB / TLB lower bounds.
//!
//! Quantiles follow the right-continuous convention Q(u) = inf{t : F(t) > u}.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::coupling::Coupling;
use crate::distortion::{distortion_pq, p_diameter};
use crate::error::{domain, Error, Result};
use crate::lambda::{check_exponent, lambda_unchecked, PqParams};
use crate::ot::linear_ot;
use crate::space::FiniteMMSpace;
use crate::special::GaussLegendre;
use crate::sphere::{QuadratureConfig, SphereSpec};

/// Tolerance of the hierarchy checks.
pub const HIERARCHY_TOL: f64 = 1e-9;
const MIN_NODES_PER_PIECE: usize = 8;

/// A finitely supported probability measure on R+ with sorted, distinct atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct Discrete1D {
    atoms: Vec<f64>,
    weights: Vec<f64>,
    cum: Vec<f64>,
}

impl Discrete1D {
    /// Sorts the atoms, merges equal ones and drops zero weights.
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.len() != weights.len() || atoms.is_empty() {
            return Err(domain("atoms and weights must be nonempty and of equal length"));
        }
        if atoms.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(domain("atoms must be finite and nonnegative"));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(domain("weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(domain(format!("weights sum to {total}, expected 1")));
        }
        let mut pairs: Vec<(f64, f64)> = atoms.into_iter().zip(weights).filter(|(_, w)| *w > 0.0).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self::from_sorted_pairs(pairs))
    }

    fn from_sorted_pairs(pairs: Vec<(f64, f64)>) -> Self {
        let mut atoms: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut weights: Vec<f64> = Vec::with_capacity(pairs.len());
        for (a, w) in pairs {
            if atoms.last() == Some(&a) {
                *weights.last_mut().unwrap() += w;
            } else {
                atoms.push(a);
                weights.push(w);
            }
        }
        let mut acc = 0.0;
        let mut cum: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        if let Some(last) = cum.last_mut() {
            *last = 1.0;
        }
        Self { atoms, weights, cum }
    }

    pub fn dirac(at: f64) -> Result<Self> {
        Self::new(vec![at], vec![1.0])
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Cumulative weights with the last entry pinned to 1.
    pub fn cumulative(&self) -> &[f64] {
        &self.cum
    }

    pub fn cdf(&self, t: f64) -> f64 {
        match self.atoms.partition_point(|&a| a <= t) {
            0 => 0.0,
            k => self.cum[k - 1],
        }
    }

    /// inf{t : F(t) > u}; the largest atom for u ≥ 1.
    pub fn quantile(&self, u: f64) -> f64 {
        let k = self.cum.partition_point(|&c| c <= u);
        self.atoms[k.min(self.atoms.len() - 1)]
    }

    /// ∫ t^r dα.
    pub fn moment(&self, r: f64) -> f64 {
        self.atoms.iter().zip(&self.weights).map(|(a, w)| a.powf(r) * w).sum()
    }

    pub fn max_atom(&self) -> f64 {
        *self.atoms.last().unwrap()
    }
}

/// Global distance distribution (d_X)_#(μ⊗μ), self-pairs at distance 0 included.
pub fn global_distribution(x: &FiniteMMSpace) -> Discrete1D {
    let (d, w) = (x.dist(), x.weights());
    let n = x.len();
    let mut pairs = Vec::with_capacity(n * n);
    for i in 0..n {
        for k in 0..n {
            let wk = w[i] * w[k];
            if wk > 0.0 {
                pairs.push((d[[i, k]], wk));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Discrete1D::from_sorted_pairs(pairs)
}

/// Local distance distribution (d_X(x_i, ·))_#μ.
pub fn local_distribution(x: &FiniteMMSpace, i: usize) -> Discrete1D {
    let mut pairs: Vec<(f64, f64)> = x
        .dist()
        .row(i)
        .iter()
        .zip(x.weights().iter())
        .filter(|(_, w)| **w > 0.0)
        .map(|(&d, &w)| (d, w))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Discrete1D::from_sorted_pairs(pairs)
}

/// A quantile source on R+: finitely supported or an analytic sphere distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum DistanceDistribution {
    Discrete(Discrete1D),
    Sphere(SphereSpec),
}

impl DistanceDistribution {
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Self::Discrete(d) => d.quantile(u),
            Self::Sphere(s) => s.quantile_unchecked(u.clamp(0.0, 1.0)),
        }
    }

    /// Points of [0, 1] where the quantile may jump.
    fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::Discrete(d) => d.cumulative().to_vec(),
            Self::Sphere(s) if s.dim == 0 => vec![0.5],
            Self::Sphere(_) => Vec::new(),
        }
    }
}

impl From<Discrete1D> for DistanceDistribution {
    fn from(d: Discrete1D) -> Self {
        Self::Discrete(d)
    }
}

impl From<SphereSpec> for DistanceDistribution {
    fn from(s: SphereSpec) -> Self {
        Self::Sphere(s)
    }
}

fn check_closed_form(p: f64, q: f64) -> Result<()> {
    check_exponent("p", p)?;
    check_exponent("q", q)?;
    if q > p {
        return Err(Error::ClosedFormUnavailable { p, q });
    }
    Ok(())
}

/// W_p on (R+, Λ_q) between two distributions, as (∫₀¹ Λ_q(Q_α, Q_β)^p du)^{1/p}.
pub fn wasserstein_1d_lambda_q(
    alpha: &DistanceDistribution,
    beta: &DistanceDistribution,
    p: f64,
    q: f64,
) -> Result<f64> {
    wasserstein_1d_lambda_q_with(alpha, beta, p, q, &QuadratureConfig::default())
}

pub fn wasserstein_1d_lambda_q_with(
    alpha: &DistanceDistribution,
    beta: &DistanceDistribution,
    p: f64,
    q: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    check_closed_form(p, q)?;
    cfg.validate()?;
    if alpha == beta {
        return Ok(0.0);
    }
    match (alpha, beta) {
        (DistanceDistribution::Discrete(a), DistanceDistribution::Discrete(b)) => Ok(discrete_w(a, b, p, q)),
        _ => Ok(quadrature_w(alpha, beta, p, q, cfg)),
    }
}

/// Exact value for two discrete measures: the quantiles are constant between merged
/// cumulative-weight breakpoints.
fn discrete_w(a: &Discrete1D, b: &Discrete1D, p: f64, q: f64) -> f64 {
    let (ca, cb) = (a.cumulative(), b.cumulative());
    let (mut i, mut j) = (0, 0);
    let mut u_prev = 0.0;
    let mut total = 0.0;
    let mut sup = 0.0_f64;
    while i < ca.len() && j < cb.len() {
        let u_next = ca[i].min(cb[j]);
        let len = u_next - u_prev;
        if len > 0.0 {
            let lam = lambda_unchecked(a.atoms[i], b.atoms[j], q);
            if p.is_infinite() {
                sup = sup.max(lam);
            } else if lam > 0.0 {
                total += lam.powf(p) * len;
            }
        }
        u_prev = u_next;
        let (adv_i, adv_j) = (ca[i] <= u_next, cb[j] <= u_next);
        i += adv_i as usize;
        j += adv_j as usize;
    }
    if p.is_infinite() {
        sup
    } else {
        total.powf(1.0 / p)
    }
}

/// Quintic smoothstep and its derivative; clusters nodes toward both ends of a piece
/// where sphere quantiles have algebraic singularities.
fn smoothstep(t: f64) -> (f64, f64) {
    let s = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
    let ds = 30.0 * t * t * (1.0 - t) * (1.0 - t);
    (s, ds)
}

fn quadrature_w(alpha: &DistanceDistribution, beta: &DistanceDistribution, p: f64, q: f64, cfg: &QuadratureConfig) -> f64 {
    let mut cuts = vec![0.0, 1.0];
    cuts.extend(alpha.breakpoints());
    cuts.extend(beta.breakpoints());
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let pieces = cuts.len() - 1;
    let per_piece = (cfg.node_count / pieces).clamp(MIN_NODES_PER_PIECE, cfg.node_count);
    let rule = GaussLegendre::new(per_piece);
    let mut total = 0.0;
    let mut sup = 0.0_f64;
    for w in cuts.windows(2) {
        let (u0, u1) = (w[0], w[1]);
        let h = u1 - u0;
        if h <= 0.0 {
            continue;
        }
        for (&t, &wt) in rule.nodes.iter().zip(&rule.weights) {
            let (s, ds) = smoothstep(t);
            let u = u0 + h * s;
            let lam = lambda_unchecked(alpha.quantile(u), beta.quantile(u), q);
            if p.is_infinite() {
                sup = sup.max(lam);
            } else if lam > 0.0 {
                total += wt * h * ds * lam.powf(p);
            }
        }
    }
    if p.is_infinite() {
        // Sup over the closed pieces: include the extreme quantiles.
        for u in [0.0, 1.0] {
            sup = sup.max(lambda_unchecked(alpha.quantile(u), beta.quantile(u), q));
        }
        sup
    } else {
        total.powf(1.0 / p)
    }
}

/// Either a finite mm-space or an analytic sphere.
#[derive(Debug, Clone, Copy)]
pub enum MmSpace<'a> {
    Finite(&'a FiniteMMSpace),
    Sphere(SphereSpec),
}

impl<'a> From<&'a FiniteMMSpace> for MmSpace<'a> {
    fn from(x: &'a FiniteMMSpace) -> Self {
        Self::Finite(x)
    }
}

impl From<SphereSpec> for MmSpace<'_> {
    fn from(s: SphereSpec) -> Self {
        Self::Sphere(s)
    }
}

impl MmSpace<'_> {
    pub fn diam_p(&self, p: f64) -> Result<f64> {
        match self {
            Self::Finite(x) => p_diameter(x, p),
            Self::Sphere(s) => s.diam_p(p, &QuadratureConfig::default()),
        }
    }

    pub fn global_distribution(&self) -> DistanceDistribution {
        match self {
            Self::Finite(x) => global_distribution(x).into(),
            Self::Sphere(s) => (*s).into(),
        }
    }

    fn same_as(&self, other: &MmSpace<'_>) -> bool {
        match (self, other) {
            (MmSpace::Finite(a), MmSpace::Finite(b)) => std::ptr::eq(*a, *b) || a == b,
            (MmSpace::Sphere(a), MmSpace::Sphere(b)) => a == b,
            _ => false,
        }
    }
}

/// Λ_q(diam_p X, diam_p Y).
pub fn dlb<'a, 'b>(x: impl Into<MmSpace<'a>>, y: impl Into<MmSpace<'b>>, p: f64, q: f64) -> Result<f64> {
    check_exponent("q", q)?;
    let (x, y) = (x.into(), y.into());
    Ok(lambda_unchecked(x.diam_p(p)?, y.diam_p(p)?, q))
}

/// W_p on (R+, Λ_q) between the global distance distributions.
pub fn slb<'a, 'b>(x: impl Into<MmSpace<'a>>, y: impl Into<MmSpace<'b>>, p: f64, q: f64) -> Result<f64> {
    let (x, y) = (x.into(), y.into());
    check_closed_form(p, q)?;
    if x.same_as(&y) {
        return Ok(0.0);
    }
    wasserstein_1d_lambda_q(&x.global_distribution(), &y.global_distribution(), p, q)
}

/// Result of [`tlb`]: the bound and the optimal coupling of the relaxation.
#[derive(Debug, Clone)]
pub struct Tlb {
    pub value: f64,
    pub coupling: Coupling,
    pub cost: Array2<f64>,
}

/// Linear OT with cost W_p(dh_X(i), dh_Y(j))^p on the local distance distributions,
/// then the p-th root.
pub fn tlb(x: &FiniteMMSpace, y: &FiniteMMSpace, p: f64, q: f64) -> Result<Tlb> {
    check_closed_form(p, q)?;
    if p.is_infinite() {
        return Err(domain("the third lower bound needs p < inf"));
    }
    let lx: Vec<Discrete1D> = (0..x.len()).map(|i| local_distribution(x, i)).collect();
    let ly: Vec<Discrete1D> = (0..y.len()).map(|j| local_distribution(y, j)).collect();
    let cost = Array2::from_shape_fn((x.len(), y.len()), |(i, j)| {
        if lx[i] == ly[j] {
            0.0
        } else {
            discrete_w(&lx[i], &ly[j], p, q).powf(p)
        }
    });
    let (coupling, value) = linear_ot(&cost, x.weights(), y.weights())?;
    Ok(Tlb { value: value.max(0.0).powf(1.0 / p), coupling, cost })
}

/// TLB for any pair of spaces. Spheres are homogeneous, so every local distribution
/// equals the global one and the relaxation collapses.
pub fn tlb_mm<'a, 'b>(x: impl Into<MmSpace<'a>>, y: impl Into<MmSpace<'b>>, p: f64, q: f64) -> Result<f64> {
    let (x, y) = (x.into(), y.into());
    match (x, y) {
        (MmSpace::Finite(a), MmSpace::Finite(b)) => Ok(tlb(a, b, p, q)?.value),
        (MmSpace::Sphere(_), MmSpace::Sphere(_)) => slb(x, y, p, q),
        (MmSpace::Finite(f), MmSpace::Sphere(s)) | (MmSpace::Sphere(s), MmSpace::Finite(f)) => {
            check_closed_form(p, q)?;
            if p.is_infinite() {
                return Err(domain("the third lower bound needs p < inf"));
            }
            let target = DistanceDistribution::Sphere(s);
            let mut total = 0.0;
            for (i, &w) in f.weights().iter().enumerate() {
                if w > 0.0 {
                    let local = DistanceDistribution::Discrete(local_distribution(f, i));
                    total += w * wasserstein_1d_lambda_q(&local, &target, p, q)?.powf(p);
                }
            }
            Ok(total.powf(1.0 / p))
        }
    }
}

/// The lower-bound chain with an optional upper bound.
///
/// dlb is evaluated at (p, p∧q). slb and tlb are only defined for q ≤ p and are
/// absent otherwise, so for p < q the report compares the upper bound against dlb alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyReport {
    #[serde(flatten)]
    pub pq: PqParams,
    pub dlb: Option<f64>,
    pub slb: Option<f64>,
    pub tlb: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    pub ordering_ok: bool,
    /// Set when p or q is infinite and the limiting formulas were used.
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub limit_mode: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

impl HierarchyReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks upper ≥ tlb ≥ slb ≥ dlb over the terms that are present.
    pub fn chain_holds(&self, tol: f64) -> bool {
        let chain: Vec<f64> = [self.upper, self.tlb, self.slb, self.dlb].into_iter().flatten().collect();
        chain.windows(2).all(|w| w[0] >= w[1] - tol)
    }
}

fn record<T>(notes: &mut Vec<String>, what: &str, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            notes.push(format!("{what}: {e}"));
            None
        }
    }
}

/// Hierarchy with the upper bound taken from a witnessed coupling between finite spaces.
pub fn hierarchy_report(x: &FiniteMMSpace, y: &FiniteMMSpace, pq: PqParams, witness: Option<&Coupling>) -> HierarchyReport {
    let mut notes = Vec::new();
    let upper = witness.and_then(|g| record(&mut notes, "upper", distortion_pq(x, y, g, pq)));
    let mut report = hierarchy_report_with_upper(x, y, pq, upper);
    report.notes.splice(0..0, notes);
    report
}

/// Hierarchy for any pair of spaces with an externally supplied upper bound.
pub fn hierarchy_report_with_upper<'a, 'b>(
    x: impl Into<MmSpace<'a>>,
    y: impl Into<MmSpace<'b>>,
    pq: PqParams,
    upper: Option<f64>,
) -> HierarchyReport {
    let (x, y) = (x.into(), y.into());
    let mut notes = Vec::new();
    let dlb = record(&mut notes, "dlb", dlb(x, y, pq.p, pq.p_wedge_q()));
    let (slb, tlb) = if pq.q <= pq.p {
        let s = record(&mut notes, "slb", slb(x, y, pq.p, pq.q));
        let t = if pq.p.is_finite() { record(&mut notes, "tlb", tlb_mm(x, y, pq.p, pq.q)) } else { None };
        (s, t)
    } else {
        notes.push("q > p: slb and tlb are not defined".into());
        (None, None)
    };
    let mut report = HierarchyReport {
        pq,
        dlb,
        slb,
        tlb,
        upper,
        ordering_ok: false,
        limit_mode: pq.p.is_infinite() || pq.q.is_infinite(),
        notes,
    };
    report.ordering_ok = report.chain_holds(HIERARCHY_TOL);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::f64::consts::PI;

    #[test]
    fn discrete_merges_and_quantiles() {
        let d = Discrete1D::new(vec![2.0, 1.0, 2.0, 5.0], vec![0.25, 0.25, 0.25, 0.25]).unwrap();
        assert_eq!(d.atoms(), &[1.0, 2.0, 5.0]);
        assert_eq!(d.weights(), &[0.25, 0.5, 0.25]);
        assert_eq!(d.quantile(0.0), 1.0);
        assert_eq!(d.quantile(0.25), 2.0);
        assert_eq!(d.quantile(0.74), 2.0);
        assert_eq!(d.quantile(0.75), 5.0);
        assert_eq!(d.quantile(1.0), 5.0);
        assert_eq!(d.cdf(2.0), 0.75);
        assert!(Discrete1D::new(vec![1.0], vec![0.5]).is_err());
    }

    #[test]
    fn moment_against_dirac_at_zero() {
        let a = Discrete1D::new(vec![0.5, 1.0, 3.0], vec![0.2, 0.3, 0.5]).unwrap();
        let z = Discrete1D::dirac(0.0).unwrap();
        for r in [1.0, 2.0, 3.5] {
            let w = wasserstein_1d_lambda_q(&a.clone().into(), &z.clone().into(), r, 1.0).unwrap();
            assert!((w - a.moment(r).powf(1.0 / r)).abs() < 1e-13);
        }
    }

    #[test]
    fn q_above_p_is_unavailable() {
        let a: DistanceDistribution = Discrete1D::dirac(1.0).unwrap().into();
        let b: DistanceDistribution = Discrete1D::dirac(2.0).unwrap().into();
        assert!(matches!(wasserstein_1d_lambda_q(&a, &b, 1.0, 4.0), Err(Error::ClosedFormUnavailable { .. })));
    }

    #[test]
    fn sphere_slb_values() {
        let g0 = SphereSpec::geodesic(0);
        let g1 = SphereSpec::geodesic(1);
        let want = PI * (0.5f64 + 0.2 - 7.0 / 12.0).powf(0.25);
        assert!((slb(g0, g1, 4.0, 2.0).unwrap() - want).abs() < 1e-9);
        assert_eq!(slb(g1, g1, 4.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn sphere_dlb_value() {
        let want = PI * (0.5f64.sqrt() - 0.2f64.sqrt()).sqrt();
        let got = dlb(SphereSpec::geodesic(0), SphereSpec::geodesic(1), 4.0, 2.0).unwrap();
        assert!((got - want).abs() < 1e-10);
    }

    #[test]
    fn tlb_of_identical_spaces_is_zero() {
        let x = FiniteMMSpace::new(
            array![[0.0, 1.0, 2.0], [1.0, 0.0, 1.5], [2.0, 1.5, 0.0]],
            array![0.2, 0.3, 0.5],
        )
        .unwrap();
        assert_eq!(tlb(&x, &x, 4.0, 2.0).unwrap().value, 0.0);
        let d = Coupling::diagonal(x.weights(), x.weights()).unwrap();
        let r = hierarchy_report(&x, &x, PqParams::four_two(), Some(&d));
        assert_eq!((r.dlb, r.slb, r.tlb, r.upper), (Some(0.0), Some(0.0), Some(0.0), Some(0.0)));
        assert!(r.ordering_ok);
    }

    #[test]
    fn report_json_fields() {
        let x = FiniteMMSpace::one_point();
        let r = hierarchy_report(&x, &x, PqParams::four_two(), None);
        let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        for key in ["p", "q", "dlb", "slb", "tlb", "ordering_ok"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(v.get("upper").is_none());
    }

    #[test]
    fn p_below_q_skips_slb() {
        let x = FiniteMMSpace::new(array![[0.0, 1.0], [1.0, 0.0]], array![0.75, 0.25]).unwrap();
        let y = FiniteMMSpace::new(array![[0.0, 1.0], [1.0, 0.0]], array![0.5, 0.5]).unwrap();
        let r = hierarchy_report(&x, &y, PqParams::new(1.0, 4.0).unwrap(), None);
        assert!(r.slb.is_none() && r.tlb.is_none());
        assert!((r.dlb.unwrap() - 0.125).abs() < 1e-15);
    }
}
