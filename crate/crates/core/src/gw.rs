//! Gromov-Wasserstein solvers on finite spaces.
//!
//! All solvers minimise f(γ) = dis_{p,q}(γ)^p = Σ L_{ikjl} γ_ij γ_kl with
//! L_{ikjl} = Λ_q(d_X(i,k), d_Y(j,l))^p. f is a quadratic form in γ, so its restriction
//! to a segment is a quadratic polynomial and line searches are exact.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coupling::Coupling;
use crate::distortion::{distortion_raw, Loss, SUPPORT_REL_THRESHOLD};
use crate::error::{domain, precondition, Error, Result};
use crate::lambda::PqParams;
use crate::ot::{linear_ot, round_to_marginals, sinkhorn_log};
use crate::sampling::splitmix64;
use crate::space::FiniteMMSpace;

/// Largest n·m accepted by the general (non-quadratic) loss.
pub const GENERIC_SIZE_CAP: usize = 10_000;
/// Largest number of free coupling entries accepted by the brute-force oracle.
pub const BRUTEFORCE_MAX_FREE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    Product,
    Diagonal,
    Random(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GwSolveParams {
    pub pq: PqParams,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub epsilon: f64,
    pub init: Init,
    pub inner_sinkhorn_iter: usize,
    /// ℓ1 marginal error at which each Sinkhorn subproblem stops.
    pub sinkhorn_tol: f64,
}

impl Default for GwSolveParams {
    fn default() -> Self {
        Self {
            pq: PqParams::four_two(),
            max_iter: 1000,
            rel_tol: 1e-9,
            epsilon: 0.01,
            init: Init::Product,
            inner_sinkhorn_iter: 1000,
            sinkhorn_tol: 1e-9,
        }
    }
}

impl GwSolveParams {
    pub fn with_pq(pq: PqParams) -> Self {
        Self { pq, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(domain("max_iter must be at least 1"));
        }
        if self.pq.p.is_infinite() {
            return Err(domain("the solvers need a finite p"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolverReport {
    /// dis_{p,q} of `coupling`, not halved.
    pub value: f64,
    pub coupling: Coupling,
    pub iterations: usize,
    pub converged: bool,
    /// f(γ) = dis^p after each accepted step, starting with the initial coupling.
    pub objective_trace: Vec<f64>,
    pub seed: Option<u64>,
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    value: f64,
    iterations: usize,
    converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<&'a [f64]>,
}

impl SolverReport {
    pub fn to_json(&self, with_trace: bool) -> Result<String> {
        let doc = ReportDoc {
            value: self.value,
            iterations: self.iterations,
            converged: self.converged,
            seed: self.seed,
            trace: with_trace.then_some(self.objective_trace.as_slice()),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

/// Random interior coupling: a positive random matrix scaled onto the marginals.
pub fn random_coupling(mu: &Array1<f64>, nu: &Array1<f64>, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut k = Array2::from_shape_simple_fn((mu.len(), nu.len()), || rng.random::<f64>() + 1e-3);
    for _ in 0..1000 {
        let rows = k.sum_axis(Axis(1));
        for (i, mut row) in k.axis_iter_mut(Axis(0)).enumerate() {
            row *= if rows[i] > 0.0 { mu[i] / rows[i] } else { 0.0 };
        }
        let cols = k.sum_axis(Axis(0));
        for (j, mut col) in k.axis_iter_mut(Axis(1)).enumerate() {
            col *= if cols[j] > 0.0 { nu[j] / cols[j] } else { 0.0 };
        }
        let err: f64 = (&k.sum_axis(Axis(1)) - mu).iter().map(|e| e.abs()).sum();
        if err < 1e-14 {
            break;
        }
    }
    round_to_marginals(k, mu, nu)
}

fn initial_coupling(x: &FiniteMMSpace, y: &FiniteMMSpace, init: Init) -> Result<Array2<f64>> {
    let (mu, nu) = (x.weights(), y.weights());
    match init {
        Init::Product => Ok(Coupling::product(mu, nu).into_gamma()),
        Init::Diagonal => Ok(Coupling::diagonal(mu, nu)?.into_gamma()),
        Init::Random(seed) => Ok(random_coupling(mu, nu, seed)),
    }
}

/// Gradient and objective machinery for one problem instance.
struct Objective {
    loss: Loss,
    quadratic: bool,
    /// μᵀ(A∘A)μ + νᵀ(B∘B)ν in the quadratic case.
    fixed: f64,
    a2mu: Array1<f64>,
    b2nu: Array1<f64>,
}

impl Objective {
    fn new(x: &FiniteMMSpace, y: &FiniteMMSpace, pq: PqParams) -> Result<Self> {
        let loss = Loss::new(x.dist().view(), y.dist().view(), pq);
        let quadratic = pq.is_quadratic();
        if !quadratic && x.len() * y.len() > GENERIC_SIZE_CAP {
            return Err(Error::Size(format!(
                "general (p,q) loss is limited to n·m <= {GENERIC_SIZE_CAP}, got {}",
                x.len() * y.len()
            )));
        }
        let (mu, nu) = (x.weights(), y.weights());
        let a2mu = if quadratic { (&loss.a * &loss.a).dot(mu) } else { Array1::zeros(0) };
        let b2nu = if quadratic { (&loss.b * &loss.b).dot(nu) } else { Array1::zeros(0) };
        let fixed = if quadratic { a2mu.dot(mu) + b2nu.dot(nu) } else { 0.0 };
        Ok(Self { loss, quadratic, fixed, a2mu, b2nu })
    }

    /// A γ B for the quadratic case.
    fn agb(&self, gamma: ArrayView2<f64>) -> Array2<f64> {
        self.loss.a.dot(&gamma).dot(&self.loss.b)
    }

    /// 2 Σ_kl L_{ikjl} P_kl for an arbitrary (possibly signed) matrix P.
    fn contract(&self, p: ArrayView2<f64>) -> Array2<f64> {
        let (n, m) = p.dim();
        let supp: Vec<(usize, usize, f64)> = p.indexed_iter().filter(|(_, v)| **v != 0.0).map(|((k, l), &v)| (k, l, v)).collect();
        Array2::from_shape_fn((n, m), |(i, j)| 2.0 * supp.iter().map(|&(k, l, v)| self.loss.eval(i, k, j, l) * v).sum::<f64>())
    }

    /// Gradient from A γ B: 2[(A²μ)_i + (B²ν)_j − 2(AγB)_ij].
    fn quadratic_grad(&self, g: &Array2<f64>) -> Array2<f64> {
        let (n, m) = g.dim();
        Array2::from_shape_fn((n, m), |(i, j)| 2.0 * (self.a2mu[i] + self.b2nu[j] - 2.0 * g[[i, j]]))
    }
}

/// ∇f(γ) through the matrix-product expansion when p = 2q and by direct contraction
/// otherwise.
pub fn gw_gradient(x: &FiniteMMSpace, y: &FiniteMMSpace, gamma: &Coupling, pq: PqParams) -> Result<Array2<f64>> {
    let obj = Objective::new(x, y, pq)?;
    if obj.quadratic {
        Ok(obj.quadratic_grad(&obj.agb(gamma.gamma().view())))
    } else {
        Ok(obj.contract(gamma.gamma().view()))
    }
}

/// ∇f(γ)_ij = 2 Σ_kl Λ_q(d_X(i,k), d_Y(j,l))^p γ_kl by the full sum.
pub fn gw_gradient_reference(x: &FiniteMMSpace, y: &FiniteMMSpace, gamma: &Coupling, pq: PqParams) -> Array2<f64> {
    let (dx, dy, g) = (x.dist(), y.dist(), gamma.gamma());
    let (n, m) = g.dim();
    Array2::from_shape_fn((n, m), |(i, j)| {
        let mut s = 0.0;
        for k in 0..n {
            for l in 0..m {
                s += crate::lambda::lambda_pow(dx[[i, k]], dy[[j, l]], pq.p, pq.q) * g[[k, l]];
            }
        }
        2.0 * s
    })
}

fn check_spaces(x: &FiniteMMSpace, y: &FiniteMMSpace) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return Err(precondition("spaces must be nonempty"));
    }
    Ok(())
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// argmin of f + b t + a t² on [0, 1].
fn quadratic_step(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        (-b / (2.0 * a)).clamp(0.0, 1.0)
    } else if a + b < 0.0 {
        1.0
    } else {
        0.0
    }
}

fn report(x: &FiniteMMSpace, y: &FiniteMMSpace, gamma: Array2<f64>, pq: PqParams, iterations: usize, converged: bool, trace: Vec<f64>, seed: Option<u64>) -> Result<SolverReport> {
    let value = distortion_raw(x.dist().view(), y.dist().view(), gamma.view(), pq, SUPPORT_REL_THRESHOLD);
    let coupling = Coupling::from_parts_unchecked(gamma, x.weights().clone(), y.weights().clone())?;
    Ok(SolverReport { value, coupling, iterations, converged, objective_trace: trace, seed })
}

fn init_seed(init: Init) -> Option<u64> {
    match init {
        Init::Random(s) => Some(s),
        _ => None,
    }
}

/// Frank-Wolfe (conditional gradient) descent on f with exact line search.
///
/// Stops when the Frank-Wolfe gap vanishes, when the optimal step is zero, or when the
/// relative decrease of f drops below `rel_tol`. Steps that would increase f through
/// rounding are rejected, so the trace is non-increasing.
pub fn gw_cgd(x: &FiniteMMSpace, y: &FiniteMMSpace, params: &GwSolveParams) -> Result<SolverReport> {
    params.validate()?;
    check_spaces(x, y)?;
    let obj = Objective::new(x, y, params.pq)?;
    let (mu, nu) = (x.weights(), y.weights());
    let mut gamma = initial_coupling(x, y, params.init)?;
    let mut g = if obj.quadratic { obj.agb(gamma.view()) } else { Array2::zeros((0, 0)) };
    let mut grad = if obj.quadratic { obj.quadratic_grad(&g) } else { obj.contract(gamma.view()) };
    let mut f = 0.5 * (&grad * &gamma).sum();
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iter {
        let (target, _) = linear_ot(&grad, mu, nu)?;
        let target = target.into_gamma();
        let dir = &target - &gamma;
        let b = (&grad * &dir).sum();
        let gap = -b;
        if gap <= 1e-12 * (max_abs(&grad) + f.abs()) {
            converged = true;
            break;
        }
        let (a, g_target) = if obj.quadratic {
            let g_target = obj.agb(target.view());
            let dg = &g_target - &g;
            // Marginal terms of Q(D, D) vanish because D has zero row and column sums.
            (-2.0 * (&dg * &dir).sum(), Some(g_target))
        } else {
            (0.5 * (&obj.contract(dir.view()) * &dir).sum(), None)
        };
        let t = quadratic_step(a, b);
        if t == 0.0 {
            converged = true;
            break;
        }
        let next = if t == 1.0 { target } else { &gamma * (1.0 - t) + &target * t };
        let (next_g, next_grad) = if let Some(gt) = g_target {
            let ng = &g * (1.0 - t) + &gt * t;
            let grad = obj.quadratic_grad(&ng);
            (ng, grad)
        } else {
            (g.clone(), obj.contract(next.view()))
        };
        let next_f = if obj.quadratic { obj.fixed - 2.0 * (&next_g * &next).sum() } else { 0.5 * (&next_grad * &next).sum() };
        iterations += 1;
        if next_f > f {
            converged = true;
            break;
        }
        let change = f - next_f;
        gamma = next;
        g = next_g;
        grad = next_grad;
        f = next_f;
        trace.push(f);
        if change <= params.rel_tol * f.abs() {
            converged = true;
            break;
        }
    }
    report(x, y, gamma, params.pq, iterations, converged, trace, init_seed(params.init))
}

/// Entropic GW: repeatedly linearise f at γ and replace γ by the Sinkhorn solution of
/// the linearised problem at regularisation ε. Stops when ‖Δγ‖_F < `rel_tol`.
/// The reported value is the unregularised distortion of the last coupling.
pub fn gw_entropic(x: &FiniteMMSpace, y: &FiniteMMSpace, params: &GwSolveParams) -> Result<SolverReport> {
    params.validate()?;
    check_spaces(x, y)?;
    if !(params.epsilon > 0.0) {
        return Err(domain(format!("epsilon must be positive, got {}", params.epsilon)));
    }
    let obj = Objective::new(x, y, params.pq)?;
    let (mu, nu) = (x.weights(), y.weights());
    let mut gamma = initial_coupling(x, y, params.init)?;
    let half_grad = |gamma: &Array2<f64>| {
        if obj.quadratic {
            obj.quadratic_grad(&obj.agb(gamma.view())) * 0.5
        } else {
            obj.contract(gamma.view()) * 0.5
        }
    };
    let mut cost = half_grad(&gamma);
    let mut trace = vec![(&cost * &gamma).sum()];
    let mut warm: Option<(Array1<f64>, Array1<f64>)> = None;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iter {
        let sk = sinkhorn_log(
            &cost,
            mu,
            nu,
            params.epsilon,
            params.inner_sinkhorn_iter,
            params.sinkhorn_tol,
            warm.as_ref().map(|(f, g)| (f, g)),
        )
        .map_err(|e| match e {
            Error::SinkhornOverflow { iteration } => Error::Solver(format!(
                "sinkhorn overflow at inner iteration {iteration} of outer iteration {}",
                iterations + 1
            )),
            other => other,
        })?;
        let next = sk.coupling.into_gamma();
        warm = Some((sk.f, sk.g));
        let delta = (&next - &gamma).iter().map(|v| v * v).sum::<f64>().sqrt();
        gamma = next;
        cost = half_grad(&gamma);
        trace.push((&cost * &gamma).sum());
        iterations += 1;
        if delta < params.rel_tol {
            converged = true;
            break;
        }
    }
    report(x, y, gamma, params.pq, iterations, converged, trace, init_seed(params.init))
}

/// Best of several CGD runs: Product, then Diagonal when the spaces have equal size and
/// weights, then random interior couplings seeded from `seed`. Ties keep the earliest.
pub fn multistart(x: &FiniteMMSpace, y: &FiniteMMSpace, params: &GwSolveParams, n_starts: usize, seed: u64) -> Result<SolverReport> {
    if n_starts == 0 {
        return Err(domain("n_starts must be at least 1"));
    }
    let mut inits = vec![Init::Product];
    if inits.len() < n_starts && Coupling::diagonal(x.weights(), y.weights()).is_ok() {
        inits.push(Init::Diagonal);
    }
    let mut k = 0u64;
    while inits.len() < n_starts {
        inits.push(Init::Random(splitmix64(seed ^ splitmix64(k))));
        k += 1;
    }
    let mut best: Option<SolverReport> = None;
    for init in inits {
        let r = gw_cgd(x, y, &GwSolveParams { init, ..*params })?;
        if best.as_ref().is_none_or(|b| r.value < b.value) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one start"))
}

/// Outcome of [`gw_bruteforce_small`].
#[derive(Debug, Clone)]
pub struct BruteForce {
    pub value: f64,
    pub argmin: Array2<f64>,
    pub grid_points: u64,
}

/// Minimum of dis_{p,q} over a grid of the coupling polytope, parameterised by the
/// entries γ_ij with i < n−1, j < m−1. Each free entry is gridded on [0, min(μ_i, ν_j)]
/// with `resolution` steps; the innermost coordinate is restricted to its exact
/// feasible interval given the others.
pub fn gw_bruteforce_small(x: &FiniteMMSpace, y: &FiniteMMSpace, pq: PqParams, resolution: usize) -> Result<BruteForce> {
    check_spaces(x, y)?;
    if pq.p.is_infinite() {
        return Err(domain("the brute-force oracle needs a finite p"));
    }
    if resolution == 0 {
        return Err(domain("resolution must be at least 1"));
    }
    let (n, m) = (x.len(), y.len());
    let free: Vec<(usize, usize)> = (0..n.saturating_sub(1)).flat_map(|i| (0..m - 1).map(move |j| (i, j))).collect();
    if free.len() > BRUTEFORCE_MAX_FREE {
        return Err(Error::Size(format!(
            "{n}×{m} has {} free entries, the oracle handles at most {BRUTEFORCE_MAX_FREE}",
            free.len()
        )));
    }
    let (mu, nu) = (x.weights(), y.weights());
    let loss = Loss::new(x.dist().view(), y.dist().view(), pq);
    let bilinear = |p: &Array2<f64>, q: &Array2<f64>| {
        let mut s = 0.0;
        for ((i, j), &pv) in p.indexed_iter() {
            if pv == 0.0 {
                continue;
            }
            for ((k, l), &qv) in q.indexed_iter() {
                if qv != 0.0 {
                    s += loss.eval(i, k, j, l) * pv * qv;
                }
            }
        }
        s
    };
    // γ(θ) = base + Σ θ_k E_k.
    let mut base = Array2::zeros((n, m));
    for i in 0..n.saturating_sub(1) {
        base[[i, m - 1]] = mu[i];
    }
    for j in 0..m - 1 {
        base[[n - 1, j]] = nu[j];
    }
    base[[n - 1, m - 1]] = mu[n - 1] - (0..m - 1).map(|j| nu[j]).sum::<f64>();
    let dirs: Vec<Array2<f64>> = free
        .iter()
        .map(|&(i, j)| {
            let mut e = Array2::zeros((n, m));
            e[[i, j]] = 1.0;
            e[[i, m - 1]] = -1.0;
            e[[n - 1, j]] = -1.0;
            e[[n - 1, m - 1]] = 1.0;
            e
        })
        .collect();
    let kdim = free.len();
    let c0 = bilinear(&base, &base);
    let lin: Vec<f64> = dirs.iter().map(|e| bilinear(&base, e)).collect();
    let h: Vec<Vec<f64>> = dirs.iter().map(|e| dirs.iter().map(|e2| bilinear(e, e2)).collect()).collect();
    let up: Vec<f64> = free.iter().map(|&(i, j)| mu[i].min(nu[j])).collect();
    let step = |k: usize, s: usize| up[k] * s as f64 / resolution as f64;
    let feas_tol = 1e-14;

    let mut best = f64::INFINITY;
    let mut best_theta = vec![0.0; kdim];
    let mut grid_points = 0u64;
    if kdim == 0 {
        best = c0;
    } else {
        let outer = kdim - 1;
        let mut idx = vec![0usize; outer];
        loop {
            let theta_outer: Vec<f64> = (0..outer).map(|k| step(k, idx[k])).collect();
            // Entries of γ with the last coordinate at zero, and its direction.
            let mut partial = base.clone();
            for (k, t) in theta_outer.iter().enumerate() {
                partial.scaled_add(*t, &dirs[k]);
            }
            let last = &dirs[outer];
            let (mut lo, mut hi) = (0.0_f64, up[outer]);
            for (pv, dv) in partial.iter().zip(last.iter()) {
                if *dv == 0.0 && *pv < -feas_tol {
                    hi = f64::NEG_INFINITY;
                } else if *dv > 0.0 {
                    lo = lo.max((-feas_tol - pv) / dv);
                } else if *dv < 0.0 {
                    hi = hi.min((pv + feas_tol) / -dv);
                }
            }
            if lo <= hi {
                // f(θ) restricted to the last coordinate: α + β t + H t².
                let mut alpha = c0;
                let mut beta = 2.0 * lin[outer];
                for k in 0..outer {
                    alpha += 2.0 * lin[k] * theta_outer[k];
                    beta += 2.0 * h[k][outer] * theta_outer[k];
                    for l in 0..outer {
                        alpha += h[k][l] * theta_outer[k] * theta_outer[l];
                    }
                }
                let hl = h[outer][outer];
                let res = resolution as f64;
                let s_lo = (lo / up[outer] * res - 1e-9).ceil().max(0.0) as usize;
                let s_hi = ((hi / up[outer] * res + 1e-9).floor() as usize).min(resolution);
                for s in s_lo..=s_hi {
                    let t = step(outer, s);
                    let v = alpha + t * (beta + hl * t);
                    grid_points += 1;
                    if v < best {
                        best = v;
                        best_theta[..outer].copy_from_slice(&theta_outer);
                        best_theta[outer] = t;
                    }
                }
            }
            // Advance the odometer over the outer coordinates.
            let mut k = 0;
            while k < outer {
                idx[k] += 1;
                if idx[k] <= resolution {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == outer {
                break;
            }
        }
    }
    let mut argmin = base;
    for (k, t) in best_theta.iter().enumerate().take(kdim) {
        argmin.scaled_add(*t, &dirs[k]);
    }
    argmin.mapv_inplace(|v| v.max(0.0));
    Ok(BruteForce { value: best.max(0.0).powf(1.0 / pq.p), argmin, grid_points })
}
