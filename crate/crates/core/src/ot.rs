//! Exact discrete optimal transport and entropic (Sinkhorn) transport.

use std::collections::VecDeque;

use ndarray::{Array1, Array2, Axis};

use crate::coupling::Coupling;
use crate::error::{domain, Error, Result};

/// Consecutive degenerate pivots after which pricing switches to Bland's rule.
const DEGENERATE_SWITCH_FACTOR: usize = 20;

fn check_marginal(name: &str, v: &Array1<f64>) -> Result<()> {
    if v.is_empty() {
        return Err(domain(format!("{name} is empty")));
    }
    if v.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(domain(format!("{name} has a negative or non-finite entry")));
    }
    let s = v.sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(domain(format!("{name} sums to {s}, expected 1")));
    }
    Ok(())
}

/// Spanning-tree basis of the transportation network. Nodes 0..n are rows and
/// n..n+m are columns.
struct Basis {
    n: usize,
    arcs: Vec<(usize, usize)>,
    flow: Vec<f64>,
    adj: Vec<Vec<usize>>,
}

impl Basis {
    fn northwest(mu: &Array1<f64>, nu: &Array1<f64>) -> Self {
        let (n, m) = (mu.len(), nu.len());
        let mut basis = Basis { n, arcs: Vec::with_capacity(n + m - 1), flow: Vec::new(), adj: vec![Vec::new(); n + m] };
        let (mut a, mut b) = (mu.to_vec(), nu.to_vec());
        let (mut i, mut j) = (0, 0);
        loop {
            let x = a[i].min(b[j]);
            a[i] -= x;
            b[j] -= x;
            basis.push(i, j, x);
            if i == n - 1 && j == m - 1 {
                break;
            }
            if j == m - 1 || (i < n - 1 && a[i] <= b[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
        basis
    }

    fn push(&mut self, i: usize, j: usize, x: f64) {
        let k = self.arcs.len();
        self.arcs.push((i, j));
        self.flow.push(x);
        self.adj[i].push(k);
        self.adj[self.n + j].push(k);
    }

    fn other_end(&self, arc: usize, node: usize) -> usize {
        let (i, j) = self.arcs[arc];
        if node == i {
            self.n + j
        } else {
            i
        }
    }

    /// Potentials with u_0 = 0 and parent arcs of the tree rooted at row 0.
    fn potentials(&self, cost: &Array2<f64>, u: &mut [f64], v: &mut [f64], parent: &mut [usize], depth: &mut [usize]) {
        let total = self.adj.len();
        let mut seen = vec![false; total];
        let mut queue = VecDeque::with_capacity(total);
        seen[0] = true;
        u[0] = 0.0;
        parent[0] = usize::MAX;
        depth[0] = 0;
        queue.push_back(0);
        while let Some(node) = queue.pop_front() {
            for &arc in &self.adj[node] {
                let next = self.other_end(arc, node);
                if seen[next] {
                    continue;
                }
                seen[next] = true;
                let (i, j) = self.arcs[arc];
                if next >= self.n {
                    v[j] = cost[[i, j]] - u[i];
                } else {
                    u[i] = cost[[i, j]] - v[j];
                }
                parent[next] = arc;
                depth[next] = depth[node] + 1;
                queue.push_back(next);
            }
        }
    }

    fn replace(&mut self, leaving: usize, i: usize, j: usize, x: f64) {
        let (li, lj) = self.arcs[leaving];
        self.adj[li].retain(|&a| a != leaving);
        self.adj[self.n + lj].retain(|&a| a != leaving);
        self.arcs[leaving] = (i, j);
        self.flow[leaving] = x;
        self.adj[i].push(leaving);
        self.adj[self.n + j].push(leaving);
    }
}

/// Exact solution of min ⟨cost, γ⟩ over couplings of (mu, nu) by the transportation
/// simplex. Pricing scans blocks of candidate arcs; after a long run of degenerate
/// pivots it falls back to Bland's rule (lowest index enters, lowest index among tied
/// candidates leaves) which cannot cycle. All tie-breaks are by lowest (row, col).
pub fn linear_ot(cost: &Array2<f64>, mu: &Array1<f64>, nu: &Array1<f64>) -> Result<(Coupling, f64)> {
    let (n, m) = cost.dim();
    if mu.len() != n || nu.len() != m {
        return Err(domain(format!("cost is {n}×{m} but the marginals have lengths {} and {}", mu.len(), nu.len())));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(domain("cost matrix contains NaN or infinite entries"));
    }
    check_marginal("mu", mu)?;
    check_marginal("nu", nu)?;

    let scale = cost.iter().fold(1.0_f64, |a, c| a.max(c.abs()));
    let eps = 1e-11 * scale;
    let mut basis = Basis::northwest(mu, nu);
    let nodes = n + m;
    let (mut u, mut v) = (vec![0.0; n], vec![0.0; m]);
    let (mut parent, mut depth) = (vec![usize::MAX; nodes], vec![0usize; nodes]);
    let total = n * m;
    let block = ((total as f64).sqrt().ceil() as usize).max(n + m).min(total);
    let mut cursor = 0usize;
    let mut degenerate_run = 0usize;
    let bland_after = DEGENERATE_SWITCH_FACTOR * (n + m);
    let max_pivots = 50 * total + 10_000;

    for _ in 0..max_pivots {
        basis.potentials(cost, &mut u, &mut v, &mut parent, &mut depth);
        let reduced = |k: usize| {
            let (i, j) = (k / m, k % m);
            cost[[i, j]] - u[i] - v[j]
        };
        let entering = if degenerate_run >= bland_after {
            (0..total).find(|&k| reduced(k) < -eps)
        } else {
            // Most negative reduced cost in the first block that has one.
            let mut found = None;
            let mut scanned = 0;
            while scanned < total && found.is_none() {
                let mut best = -eps;
                let len = block.min(total - scanned);
                for s in 0..len {
                    let k = (cursor + s) % total;
                    let r = reduced(k);
                    if r < best || (r == best && found.is_some_and(|f| k < f)) {
                        best = r;
                        found = Some(k);
                    }
                }
                cursor = (cursor + len) % total;
                scanned += len;
            }
            found
        };
        let Some(k) = entering else {
            let mut gamma = Array2::zeros((n, m));
            let mut value = 0.0;
            for (&(i, j), &x) in basis.arcs.iter().zip(&basis.flow) {
                gamma[[i, j]] += x;
                value += cost[[i, j]] * x;
            }
            let coupling = Coupling::from_parts_unchecked(gamma, mu.clone(), nu.clone())?;
            return Ok((coupling, value));
        };
        let (ei, ej) = (k / m, k % m);

        // Tree path from column ej back to row ei; arcs alternate −, +, −, … from ej.
        let (mut a, mut b) = (ei, n + ej);
        let mut from_row = Vec::new();
        let mut from_col = Vec::new();
        while a != b {
            if depth[a] >= depth[b] {
                from_row.push(parent[a]);
                a = basis.other_end(parent[a], a);
            } else {
                from_col.push(parent[b]);
                b = basis.other_end(parent[b], b);
            }
        }
        let cycle: Vec<usize> = from_col.iter().copied().chain(from_row.iter().rev().copied()).collect();
        let mut theta = f64::INFINITY;
        let mut leaving = usize::MAX;
        for (pos, &arc) in cycle.iter().enumerate() {
            if pos % 2 == 0 {
                let x = basis.flow[arc];
                let better = x < theta || (x == theta && basis.arcs[arc] < basis.arcs[leaving]);
                if better {
                    theta = x;
                    leaving = arc;
                }
            }
        }
        for (pos, &arc) in cycle.iter().enumerate() {
            if pos % 2 == 0 {
                basis.flow[arc] -= theta;
            } else {
                basis.flow[arc] += theta;
            }
        }
        basis.replace(leaving, ei, ej, theta);
        degenerate_run = if theta > 0.0 { 0 } else { degenerate_run + 1 };
    }
    Err(Error::Solver(format!("transportation simplex exceeded {max_pivots} pivots")))
}

/// Output of [`sinkhorn_log`].
#[derive(Debug, Clone)]
pub struct SinkhornResult {
    /// The rounded plan; its marginals are exact up to floating point.
    pub coupling: Coupling,
    pub f: Array1<f64>,
    pub g: Array1<f64>,
    pub iterations: usize,
    /// ℓ1 row-marginal error of the unrounded plan when iteration stopped.
    pub marginal_error: f64,
    pub converged: bool,
}

fn lse(values: impl Iterator<Item = f64>, buf: &mut Vec<f64>) -> f64 {
    buf.clear();
    buf.extend(values);
    let max = buf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + buf.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Stabilised log-domain Sinkhorn for min ⟨C, γ⟩ − ε H(γ) over couplings of (mu, nu).
///
/// Dual potentials satisfy γ_ij = exp((f_i + g_j − C_ij)/ε). Scaling iterations run on
/// the kernel with the current potentials absorbed; the scalings are folded back into
/// (f, g) by an exact log-domain update whenever they leave [1e-100, 1e100]. Iterates
/// until the ℓ1 row-marginal error is at most `tol`; the plan is then rounded onto the
/// exact marginals. `warm` supplies starting potentials (f, g).
pub fn sinkhorn_log(
    cost: &Array2<f64>,
    mu: &Array1<f64>,
    nu: &Array1<f64>,
    epsilon: f64,
    max_iter: usize,
    tol: f64,
    warm: Option<(&Array1<f64>, &Array1<f64>)>,
) -> Result<SinkhornResult> {
    let (n, m) = cost.dim();
    if mu.len() != n || nu.len() != m {
        return Err(domain("cost shape does not match the marginals"));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(domain(format!("epsilon must be positive, got {epsilon}")));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(domain("cost matrix contains NaN or infinite entries"));
    }
    check_marginal("mu", mu)?;
    check_marginal("nu", nu)?;
    let log_mu = mu.mapv(f64::ln);
    let log_nu = nu.mapv(f64::ln);
    let (mut f, mut g) = match warm {
        Some((f0, g0)) if f0.len() == n && g0.len() == m => (f0.clone(), g0.clone()),
        _ => (Array1::zeros(n), Array1::zeros(m)),
    };
    for i in 0..n {
        if mu[i] == 0.0 {
            f[i] = f64::NEG_INFINITY;
        }
    }
    let ct = cost.t().to_owned();
    let mut buf = Vec::with_capacity(n.max(m));
    let mut err = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let in_range = |x: f64| (1e-100..=1e100).contains(&x);
    'outer: while iterations < max_iter {
        for j in 0..m {
            g[j] = if nu[j] == 0.0 {
                f64::NEG_INFINITY
            } else {
                let col = ct.row(j);
                epsilon * (log_nu[j] - lse((0..n).map(|i| (f[i] - col[i]) / epsilon), &mut buf))
            };
        }
        // Row sums of the current plan fall out of the f-update for free.
        err = 0.0;
        let mut next_f = Array1::zeros(n);
        for i in 0..n {
            if mu[i] == 0.0 {
                next_f[i] = f64::NEG_INFINITY;
                continue;
            }
            let row = cost.row(i);
            let l = lse((0..m).map(|j| (g[j] - row[j]) / epsilon), &mut buf);
            err += ((f[i] / epsilon + l).exp() - mu[i]).abs();
            next_f[i] = epsilon * (log_mu[i] - l);
        }
        iterations += 1;
        if next_f.iter().chain(g.iter()).any(|x| x.is_nan() || *x == f64::INFINITY) || !err.is_finite() {
            return Err(Error::SinkhornOverflow { iteration: iterations });
        }
        if err <= tol {
            converged = true;
            break;
        }
        f = next_f;

        let kernel = Array2::from_shape_fn((n, m), |(i, j)| {
            let e = (f[i] + g[j] - cost[[i, j]]) / epsilon;
            if e == f64::NEG_INFINITY {
                0.0
            } else {
                e.exp()
            }
        });
        let mut u = Array1::from_shape_fn(n, |i| if mu[i] == 0.0 { 0.0 } else { 1.0 });
        let mut v = Array1::<f64>::ones(m);
        while iterations < max_iter {
            let mut ktu = Array1::<f64>::zeros(m);
            for (row, &ui) in kernel.axis_iter(Axis(0)).zip(u.iter()) {
                if ui != 0.0 {
                    ktu.scaled_add(ui, &row);
                }
            }
            let next_v = Array1::from_shape_fn(m, |j| if nu[j] == 0.0 { 0.0 } else { nu[j] / ktu[j] });
            if next_v.iter().zip(nu.iter()).any(|(x, w)| *w > 0.0 && !in_range(*x)) {
                break;
            }
            let kv = Array1::from_iter(kernel.axis_iter(Axis(0)).map(|row| row.dot(&next_v)));
            let next_u = Array1::from_shape_fn(n, |i| if mu[i] == 0.0 { 0.0 } else { mu[i] / kv[i] });
            if next_u.iter().zip(mu.iter()).any(|(x, w)| *w > 0.0 && !in_range(*x)) {
                break;
            }
            v = next_v;
            err = (0..n).map(|i| (u[i] * kv[i] - mu[i]).abs()).sum();
            iterations += 1;
            if err <= tol {
                absorb(&mut f, &u, epsilon);
                absorb(&mut g, &v, epsilon);
                converged = true;
                break 'outer;
            }
            u = next_u;
        }
        absorb(&mut f, &u, epsilon);
        absorb(&mut g, &v, epsilon);
    }
    let plan = Array2::from_shape_fn((n, m), |(i, j)| {
        let e = (f[i] + g[j] - cost[[i, j]]) / epsilon;
        if e == f64::NEG_INFINITY {
            0.0
        } else {
            e.exp()
        }
    });
    let gamma = round_to_marginals(plan, mu, nu);
    let coupling = Coupling::from_parts_unchecked(gamma, mu.clone(), nu.clone())?;
    Ok(SinkhornResult { coupling, f, g, iterations, marginal_error: err, converged })
}

fn absorb(potential: &mut Array1<f64>, scaling: &Array1<f64>, epsilon: f64) {
    for (p, s) in potential.iter_mut().zip(scaling.iter()) {
        if *s > 0.0 {
            *p += epsilon * s.ln();
        }
    }
}

/// Projection of a nonnegative plan onto the coupling polytope: scale rows and
/// columns down where they exceed the marginal, then add the rank-one correction.
pub fn round_to_marginals(mut plan: Array2<f64>, mu: &Array1<f64>, nu: &Array1<f64>) -> Array2<f64> {
    let rows = plan.sum_axis(Axis(1));
    for (i, mut row) in plan.axis_iter_mut(Axis(0)).enumerate() {
        if rows[i] > mu[i] {
            row *= mu[i] / rows[i];
        }
    }
    let cols = plan.sum_axis(Axis(0));
    for (j, mut col) in plan.axis_iter_mut(Axis(1)).enumerate() {
        if cols[j] > nu[j] {
            col *= nu[j] / cols[j];
        }
    }
    let er: Array1<f64> = (mu - &plan.sum_axis(Axis(1))).mapv(|x| x.max(0.0));
    let ec: Array1<f64> = (nu - &plan.sum_axis(Axis(0))).mapv(|x| x.max(0.0));
    let mass = er.sum();
    if mass > 0.0 {
        for i in 0..plan.nrows() {
            for j in 0..plan.ncols() {
                plan[[i, j]] += er[i] * ec[j] / mass;
            }
        }
    }
    plan
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::validate_coupling;
    use ndarray::array;

    #[test]
    fn single_row_is_forced() {
        let cost = array![[3.0, 1.0, 2.0]];
        let nu = array![0.2, 0.3, 0.5];
        let (c, value) = linear_ot(&cost, &array![1.0], &nu).unwrap();
        assert_eq!(c.gamma().row(0).to_owned(), nu);
        assert!((value - (0.6 + 0.3 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn identity_favoring_cost() {
        let n = 5;
        let cost = Array2::from_shape_fn((n, n), |(i, j)| if i == j { 0.0 } else { 1.0 });
        let w = Array1::from_elem(n, 0.2);
        let (c, value) = linear_ot(&cost, &w, &w).unwrap();
        assert_eq!(value, 0.0);
        assert_eq!(c.gamma(), &Array2::from_diag(&w));
    }

    #[test]
    fn sorted_matching_cost() {
        let a: [f64; 4] = [0.1, 0.5, 0.9, 1.4];
        let b: [f64; 4] = [0.0, 0.3, 1.0, 2.0];
        let cost = Array2::from_shape_fn((4, 4), |(i, j)| (a[i] - b[j]).abs());
        let w = Array1::from_elem(4, 0.25);
        let (c, value) = linear_ot(&cost, &w, &w).unwrap();
        let want: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / 4.0;
        assert!((value - want).abs() < 1e-14);
        assert!(validate_coupling(&c).ok);
    }

    #[test]
    fn rejects_nan_cost() {
        let cost = array![[f64::NAN, 1.0]];
        assert!(linear_ot(&cost, &array![1.0], &array![0.5, 0.5]).is_err());
    }

    #[test]
    fn sinkhorn_marginals_and_warm_start() {
        let cost = array![[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]];
        let mu = array![0.2, 0.5, 0.3];
        let nu = array![0.4, 0.4, 0.2];
        let r = sinkhorn_log(&cost, &mu, &nu, 0.1, 10_000, 1e-12, None).unwrap();
        assert!(r.converged);
        assert!(validate_coupling(&r.coupling).ok);
        let again = sinkhorn_log(&cost, &mu, &nu, 0.1, 10_000, 1e-12, Some((&r.f, &r.g))).unwrap();
        assert!(again.iterations <= 2);
    }

    #[test]
    fn sinkhorn_tends_to_exact_ot() {
        let cost = array![[0.0, 1.0], [1.0, 0.0]];
        let w = array![0.5, 0.5];
        let r = sinkhorn_log(&cost, &w, &w, 1e-3, 10_000, 1e-12, None).unwrap();
        assert!(r.coupling.gamma()[[0, 1]] < 1e-100);
    }

    #[test]
    fn sinkhorn_zero_weights() {
        let cost = array![[0.0, 1.0], [1.0, 0.0]];
        let r = sinkhorn_log(&cost, &array![1.0, 0.0], &array![0.5, 0.5], 0.5, 1000, 1e-12, None).unwrap();
        assert_eq!(r.coupling.gamma().row(1).sum(), 0.0);
        assert!(validate_coupling(&r.coupling).ok);
    }
}
