//! The (p,q)-distortion of a coupling, p-diameters and the cross-correlation functional.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::coupling::{Coupling, MARGINAL_REL_TOL};
use crate::error::{precondition, Result};
use crate::lambda::{lambda_unchecked, pow_ratio, PqParams};
use crate::space::{check_unit_rows, FiniteMMSpace};

/// Entries above this fraction of the total mass form the support used when p = ∞.
pub const SUPPORT_REL_THRESHOLD: f64 = 1e-15;

/// Pointwise loss Λ_q(d_X, d_Y)^p with the q-th powers precomputed.
pub(crate) struct Loss {
    pub(crate) a: Array2<f64>,
    pub(crate) b: Array2<f64>,
    ratio: f64,
    p: f64,
    q: f64,
    q_inf: bool,
}

impl Loss {
    pub(crate) fn new(dx: ArrayView2<f64>, dy: ArrayView2<f64>, pq: PqParams) -> Self {
        let q_inf = pq.q.is_infinite();
        let (a, b) = if q_inf || pq.q == 1.0 {
            (dx.to_owned(), dy.to_owned())
        } else {
            (dx.mapv(|d| d.powf(pq.q)), dy.mapv(|d| d.powf(pq.q)))
        };
        Self { a, b, ratio: pq.p / pq.q, p: pq.p, q: pq.q, q_inf }
    }

    #[inline]
    pub(crate) fn eval(&self, i: usize, k: usize, j: usize, l: usize) -> f64 {
        let (x, y) = (self.a[[i, k]], self.b[[j, l]]);
        if self.q_inf {
            let v = lambda_unchecked(x, y, f64::INFINITY);
            if v == 0.0 {
                0.0
            } else {
                v.powf(self.p)
            }
        } else {
            pow_ratio((x - y).abs(), self.ratio)
        }
    }

    /// Λ_q itself, without the p-th power.
    #[inline]
    fn lambda(&self, i: usize, k: usize, j: usize, l: usize) -> f64 {
        let (x, y) = (self.a[[i, k]], self.b[[j, l]]);
        if self.q_inf {
            lambda_unchecked(x, y, f64::INFINITY)
        } else {
            pow_ratio((x - y).abs(), 1.0 / self.q)
        }
    }
}

pub(crate) fn support(gamma: ArrayView2<f64>, cutoff: f64) -> Vec<(usize, usize, f64)> {
    gamma
        .indexed_iter()
        .filter(|(_, &g)| g > cutoff)
        .map(|((i, j), &g)| (i, j, g))
        .collect()
}

/// Σ over support pairs of loss · γ_ij γ_kl. Exact for any nonnegative matrix since
/// zero entries contribute nothing; the diagonal pair terms vanish because Λ_q(0,0) = 0.
fn support_pair_sum(loss: &Loss, supp: &[(usize, usize, f64)]) -> f64 {
    let mut total = 0.0;
    for (s, &(i, j, g)) in supp.iter().enumerate() {
        let mut row = 0.0;
        for &(k, l, h) in &supp[s + 1..] {
            row += loss.eval(i, k, j, l) * h;
        }
        total += g * row;
    }
    2.0 * total
}

/// Dense evaluation of Σ (A_ik − B_jl)² γ_ij γ_kl by three matrix products.
pub(crate) fn quadratic_dense(a: &Array2<f64>, b: &Array2<f64>, gamma: ArrayView2<f64>) -> f64 {
    let r = gamma.sum_axis(Axis(1));
    let c = gamma.sum_axis(Axis(0));
    let ta = (a * a).dot(&r).dot(&r);
    let tb = (b * b).dot(&c).dot(&c);
    let agb = a.dot(&gamma).dot(b);
    let cross = (&agb * &gamma).sum();
    (ta + tb - 2.0 * cross).max(0.0)
}

fn use_support_path(n: usize, m: usize, support_len: usize) -> bool {
    let s = support_len as f64;
    s * s <= (n * m) as f64 * (n + m) as f64
}

/// dis_{p,q}(γ)^p for finite p, without input checks.
pub(crate) fn objective_pow(loss: &Loss, gamma: ArrayView2<f64>, quadratic: bool) -> f64 {
    let (n, m) = gamma.dim();
    let supp = support(gamma, 0.0);
    if quadratic && !use_support_path(n, m, supp.len()) {
        quadratic_dense(&loss.a, &loss.b, gamma)
    } else {
        support_pair_sum(loss, &supp)
    }
}

/// Distortion from raw matrices, without validation. `support_rel` only matters for p = ∞.
pub fn distortion_raw(
    dx: ArrayView2<f64>,
    dy: ArrayView2<f64>,
    gamma: ArrayView2<f64>,
    pq: PqParams,
    support_rel: f64,
) -> f64 {
    let loss = Loss::new(dx, dy, pq);
    if pq.p.is_infinite() {
        let supp = support(gamma, support_rel * gamma.sum());
        let mut best = 0.0_f64;
        for &(i, j, _) in &supp {
            for &(k, l, _) in &supp {
                best = best.max(loss.lambda(i, k, j, l));
            }
        }
        return best;
    }
    objective_pow(&loss, gamma, pq.is_quadratic()).powf(1.0 / pq.p)
}

fn check_marginals(x: &FiniteMMSpace, y: &FiniteMMSpace, gamma: &Coupling) -> Result<()> {
    if gamma.rows() != x.len() || gamma.cols() != y.len() {
        return Err(precondition(format!(
            "coupling is {}×{} but the spaces have {} and {} points",
            gamma.rows(),
            gamma.cols(),
            x.len(),
            y.len()
        )));
    }
    let close = |s: f64, w: f64| (s - w).abs() <= MARGINAL_REL_TOL * w.max(1e-4 * MARGINAL_REL_TOL);
    let rows = gamma.gamma().sum_axis(Axis(1));
    let cols = gamma.gamma().sum_axis(Axis(0));
    if let Some(i) = (0..x.len()).find(|&i| !close(rows[i], x.weights()[i])) {
        return Err(precondition(format!("row marginal {i} is {} but the weight is {}", rows[i], x.weights()[i])));
    }
    if let Some(j) = (0..y.len()).find(|&j| !close(cols[j], y.weights()[j])) {
        return Err(precondition(format!("column marginal {j} is {} but the weight is {}", cols[j], y.weights()[j])));
    }
    Ok(())
}

/// dis_{p,q}(γ). Uses the support-pair sum when the support is small and the
/// matrix-product expansion for p = 2q otherwise.
pub fn distortion_pq(x: &FiniteMMSpace, y: &FiniteMMSpace, gamma: &Coupling, pq: PqParams) -> Result<f64> {
    distortion_pq_threshold(x, y, gamma, pq, SUPPORT_REL_THRESHOLD)
}

pub fn distortion_pq_threshold(
    x: &FiniteMMSpace,
    y: &FiniteMMSpace,
    gamma: &Coupling,
    pq: PqParams,
    support_rel: f64,
) -> Result<f64> {
    check_marginals(x, y, gamma)?;
    Ok(distortion_raw(x.dist().view(), y.dist().view(), gamma.gamma().view(), pq, support_rel))
}

/// Direct quadruple sum, used as the oracle for the faster paths.
pub fn distortion_pq_reference(x: &FiniteMMSpace, y: &FiniteMMSpace, gamma: &Coupling, pq: PqParams) -> Result<f64> {
    check_marginals(x, y, gamma)?;
    if pq.p.is_infinite() {
        return Ok(distortion_raw(x.dist().view(), y.dist().view(), gamma.gamma().view(), pq, SUPPORT_REL_THRESHOLD));
    }
    let (n, m) = (x.len(), y.len());
    let (dx, dy, g) = (x.dist(), y.dist(), gamma.gamma());
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..m {
            for k in 0..n {
                for l in 0..m {
                    let lam = lambda_unchecked(dx[[i, k]], dy[[j, l]], pq.q);
                    if lam > 0.0 {
                        total += lam.powf(pq.p) * g[[i, j]] * g[[k, l]];
                    }
                }
            }
        }
    }
    Ok(total.powf(1.0 / pq.p))
}

/// diam_p(X) = (Σ d_ik^p w_i w_k)^{1/p}; the largest distance between atoms of positive
/// weight for p = ∞.
pub fn p_diameter(x: &FiniteMMSpace, p: f64) -> Result<f64> {
    crate::lambda::check_exponent("p", p)?;
    let (d, w) = (x.dist(), x.weights());
    let n = x.len();
    if p.is_infinite() {
        let mut best = 0.0_f64;
        for i in (0..n).filter(|&i| w[i] > 0.0) {
            for k in (0..n).filter(|&k| w[k] > 0.0) {
                best = best.max(d[[i, k]]);
            }
        }
        return Ok(best);
    }
    let mut total = 0.0;
    for i in 0..n {
        for k in 0..n {
            total += d[[i, k]].powf(p) * w[i] * w[k];
        }
    }
    Ok(total.powf(1.0 / p))
}

/// M_γ = Σ γ_ij x_i y_jᵀ and J = ‖M_γ‖²_F.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossCorrelation {
    pub m: Array2<f64>,
    pub j: f64,
    /// Σ_k M_kk² over the leading square block.
    pub d: f64,
}

impl CrossCorrelation {
    pub fn from_matrix(m: Array2<f64>) -> Self {
        let j = m.iter().map(|v| v * v).sum();
        let d = m.diag().iter().map(|v| v * v).sum();
        Self { m, j, d }
    }
}

/// Σ γ_ij x_i y_jᵀ over the nonzero entries of γ in row-major order.
pub(crate) fn cross_matrix(xc: ArrayView2<f64>, yc: ArrayView2<f64>, gamma: ArrayView2<f64>) -> Array2<f64> {
    let mut m = Array2::zeros((xc.ncols(), yc.ncols()));
    for ((i, j), &g) in gamma.indexed_iter() {
        if g == 0.0 {
            continue;
        }
        let (xi, yj) = (xc.row(i), yc.row(j));
        for a in 0..xc.ncols() {
            let s = g * xi[a];
            for b in 0..yc.ncols() {
                m[[a, b]] += s * yj[b];
            }
        }
    }
    m
}

fn coords_of<'a>(x: &'a FiniteMMSpace, which: &str) -> Result<&'a Array2<f64>> {
    x.coords().ok_or_else(|| precondition(format!("{which} carries no coordinates")))
}

pub fn cross_correlation(x: &FiniteMMSpace, y: &FiniteMMSpace, gamma: &Coupling) -> Result<CrossCorrelation> {
    let (xc, yc) = (coords_of(x, "X")?, coords_of(y, "Y")?);
    check_marginals(x, y, gamma)?;
    Ok(CrossCorrelation::from_matrix(cross_matrix(xc.view(), yc.view(), gamma.gamma().view())))
}

/// dis_{4,2}(γ) on unit-norm clouds through inner products:
/// (4 Σ w_i w_k ⟨x_i,x_k⟩² + 4 Σ v_j v_l ⟨y_j,y_l⟩² − 8 J(γ))^{1/4}.
pub fn dis42_via_inner_products(x: &FiniteMMSpace, y: &FiniteMMSpace, gamma: &Coupling) -> Result<f64> {
    let (xc, yc) = (coords_of(x, "X")?, coords_of(y, "Y")?);
    check_unit_rows(xc.view(), 1e-10)?;
    check_unit_rows(yc.view(), 1e-10)?;
    check_marginals(x, y, gamma)?;
    let frob = |m: Array2<f64>| m.iter().map(|v| v * v).sum::<f64>();
    let self_term = |c: &Array2<f64>, w: &Array1<f64>| frob(cross_matrix(c.view(), c.view(), Array2::from_diag(w).view()));
    let tx = self_term(xc, x.weights());
    let ty = self_term(yc, y.weights());
    let j = frob(cross_matrix(xc.view(), yc.view(), gamma.gamma().view()));
    Ok((4.0 * tx + 4.0 * ty - 8.0 * j).max(0.0).powf(0.25))
}
