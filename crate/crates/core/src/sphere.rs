//! Closed forms for round spheres with their normalized volume measure.
//!
//! Distance distributions reduce to the regularized incomplete beta function:
//! H(t) = I_{sin²(t/2)}(n/2, n/2) for the geodesic metric and I_{t²/4}(n/2, n/2) for
//! the chordal one. 𝕊⁰ is the two-point space, whose distribution has a jump at ½.

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::space::MetricKind;
use crate::special::{beta_reg, inv_beta_reg, ln_gamma, GaussLegendre};

/// Slack allowed when a distance argument overshoots the diameter by rounding.
const RANGE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SphereSpec {
    pub dim: usize,
    pub metric: MetricKind,
}

/// Quadrature and Monte Carlo settings for the sphere computations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub node_count: usize,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { node_count: 256, mc_samples: 100_000, seed: 0x5eed }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.node_count < 16 {
            return Err(domain(format!("node_count must be at least 16, got {}", self.node_count)));
        }
        if self.mc_samples < 2 {
            return Err(domain("mc_samples must be at least 2"));
        }
        Ok(())
    }

    pub fn rule(&self) -> GaussLegendre {
        GaussLegendre::new(self.node_count)
    }
}

impl SphereSpec {
    pub fn new(dim: usize, metric: MetricKind) -> Self {
        Self { dim, metric }
    }

    pub fn geodesic(dim: usize) -> Self {
        Self::new(dim, MetricKind::Geodesic)
    }

    pub fn euclidean(dim: usize) -> Self {
        Self::new(dim, MetricKind::Euclidean)
    }

    pub fn diameter(&self) -> f64 {
        self.metric.sphere_diameter()
    }

    /// Distance as a function of the angle θ ∈ [0, π] between two points.
    pub fn distance_at_angle(&self, theta: f64) -> f64 {
        match self.metric {
            MetricKind::Geodesic => theta,
            MetricKind::Euclidean => 2.0 * (0.5 * theta).sin(),
        }
    }

    fn half_dim(&self) -> f64 {
        0.5 * self.dim as f64
    }

    /// Global distance distribution function P(d(x, x') ≤ t).
    pub fn cdf(&self, t: f64) -> Result<f64> {
        let diam = self.diameter();
        if !(t >= -RANGE_SLACK && t <= diam + RANGE_SLACK) {
            return Err(domain(format!("t = {t} lies outside [0, {diam}]")));
        }
        let t = t.clamp(0.0, diam);
        if self.dim == 0 {
            return Ok(if t >= diam { 1.0 } else { 0.5 });
        }
        let x = match self.metric {
            MetricKind::Geodesic => (0.5 * t).sin().powi(2),
            MetricKind::Euclidean => 0.25 * t * t,
        };
        let a = self.half_dim();
        Ok(beta_reg(a, a, x))
    }

    /// Generalized inverse inf{t : H(t) > u}; for 𝕊⁰ this is 0 on [0, ½] and the
    /// diameter on (½, 1].
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(domain(format!("u = {u} lies outside [0, 1]")));
        }
        Ok(self.quantile_unchecked(u))
    }

    pub(crate) fn quantile_unchecked(&self, u: f64) -> f64 {
        let diam = self.diameter();
        if self.dim == 0 {
            return if u <= 0.5 { 0.0 } else { diam };
        }
        let a = self.half_dim();
        let x = inv_beta_reg(a, a, u);
        match self.metric {
            MetricKind::Geodesic => 2.0 * x.sqrt().min(1.0).asin(),
            MetricKind::Euclidean => 2.0 * x.sqrt(),
        }
    }

    /// Normalizing constant of the angle density c_n sin^{n−1}θ on [0, π].
    fn angle_density_const(&self) -> f64 {
        let n = self.dim as f64;
        (ln_gamma(0.5 * (n + 1.0)) - 0.5 * std::f64::consts::PI.ln() - ln_gamma(0.5 * n)).exp()
    }

    /// (∫₀¹ H⁻¹(u)^p du)^{1/p}. Evaluated as c_n ∫₀^π d(θ)^p sin^{n−1}θ dθ by
    /// Gauss-Legendre; exact for 𝕊⁰ and for p = ∞.
    pub fn diam_p(&self, p: f64, cfg: &QuadratureConfig) -> Result<f64> {
        crate::lambda::check_exponent("p", p)?;
        cfg.validate()?;
        let diam = self.diameter();
        if p.is_infinite() {
            return Ok(diam);
        }
        if self.dim == 0 {
            return Ok(diam * 0.5f64.powf(1.0 / p));
        }
        let c = self.angle_density_const();
        let k = self.dim as i32 - 1;
        let moment = cfg
            .rule()
            .integrate_on(0.0, std::f64::consts::PI, |th| self.distance_at_angle(th).powf(p) * th.sin().powi(k));
        Ok((c * moment).powf(1.0 / p))
    }
}

fn check_dims(m: usize, n: usize) -> Result<()> {
    if m > n {
        return Err(domain(format!("expected m <= n, got m = {m}, n = {n}")));
    }
    Ok(())
}

/// E‖y_A‖ for y uniform on 𝕊ⁿ and A its leading (m+1)-block:
/// Γ((m+2)/2)Γ((n+1)/2) / (Γ((m+1)/2)Γ((n+2)/2)).
pub fn mean_projection_norm(m: usize, n: usize) -> Result<f64> {
    check_dims(m, n)?;
    if m == n {
        return Ok(1.0);
    }
    let (m, n) = (m as f64, n as f64);
    let ln = ln_gamma(0.5 * (m + 2.0)) + ln_gamma(0.5 * (n + 1.0)) - ln_gamma(0.5 * (m + 1.0)) - ln_gamma(0.5 * (n + 2.0));
    Ok(ln.exp())
}

/// 1/(m+1) + 1/(n+1) − 2/(m+1)·E‖y_A‖², the bracket shared by the exact value and
/// the equatorial distortion.
fn equatorial_bracket(m: usize, n: usize) -> Result<f64> {
    check_dims(m, n)?;
    if m == n {
        return Ok(0.0);
    }
    let r = mean_projection_norm(m, n)?;
    let (a, b) = (1.0 / (m as f64 + 1.0), 1.0 / (n as f64 + 1.0));
    Ok((a + b - 2.0 * a * r * r).max(0.0))
}

/// d_GW4,2 between 𝕊ᵐ_E and 𝕊ⁿ_E, attained by the equatorial coupling.
pub fn exact_gw42_euclidean(m: usize, n: usize) -> Result<f64> {
    Ok(std::f64::consts::FRAC_1_SQRT_2 * equatorial_bracket(m, n)?.powf(0.25))
}

/// dis_{4,2} of the equatorial coupling between 𝕊ᵐ_E and 𝕊ⁿ_E.
pub fn equatorial_dis42_euclidean(m: usize, n: usize) -> Result<f64> {
    Ok((4.0 * equatorial_bracket(m, n)?).powf(0.25))
}

/// Limit of exact_gw42_euclidean(m, n) as n → ∞.
pub fn gw42_asymptote_fixed_m(m: usize) -> f64 {
    std::f64::consts::FRAC_1_SQRT_2 * (1.0 / (m as f64 + 1.0)).powf(0.25)
}

/// A Monte Carlo value with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl McEstimate {
    pub fn exact(value: f64) -> Self {
        Self { value, std_error: 0.0, samples: 0 }
    }
}

/// Uniform point on 𝕊ⁿ whose leading (m+1)-block is not degenerate.
fn equatorial_pair_sample(rng: &mut ChaCha8Rng, n: usize, m: usize) -> (Array1<f64>, Array1<f64>) {
    loop {
        let g: Array1<f64> = (0..=n).map(|_| StandardNormal.sample(rng)).collect();
        let norm = g.dot(&g).sqrt();
        let lead = g.slice(ndarray::s![..=m]);
        let lead_norm = lead.dot(&lead).sqrt();
        if norm > 0.0 && lead_norm / norm >= crate::sampling::DEGENERATE_TOL {
            return (&g / norm, lead.to_owned() / lead_norm);
        }
    }
}

/// dis_{4,2} of the equatorial coupling between 𝕊ᵐ_G and 𝕊ⁿ_G. The (0,1) case is
/// (1/5)^{1/4}π exactly; other pairs are estimated from `cfg.mc_samples` independent
/// pairs, with the standard error carried through the fourth root by the delta method.
pub fn equatorial_dis42_geodesic(m: usize, n: usize, cfg: &QuadratureConfig) -> Result<McEstimate> {
    check_dims(m, n)?;
    cfg.validate()?;
    if m == n {
        return Ok(McEstimate::exact(0.0));
    }
    if (m, n) == (0, 1) {
        return Ok(McEstimate::exact(0.2f64.powf(0.25) * std::f64::consts::PI));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let geo = MetricKind::Geodesic;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..cfg.mc_samples {
        let (y, x) = equatorial_pair_sample(&mut rng, n, m);
        let (y2, x2) = equatorial_pair_sample(&mut rng, n, m);
        let dx = geo.distance(x.view(), x2.view());
        let dy = geo.distance(y.view(), y2.view());
        let loss = (dx * dx - dy * dy).powi(2);
        sum += loss;
        sum_sq += loss * loss;
    }
    let k = cfg.mc_samples as f64;
    let mean = sum / k;
    let var = ((sum_sq - k * mean * mean) / (k - 1.0)).max(0.0);
    let se_mean = (var / k).sqrt();
    let value = mean.powf(0.25);
    let std_error = if mean > 0.0 { 0.25 * mean.powf(-0.75) * se_mean } else { 0.0 };
    Ok(McEstimate { value, std_error, samples: cfg.mc_samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn closed_form_cdfs() {
        for i in 0..=20 {
            let t = PI * i as f64 / 20.0;
            assert!((SphereSpec::geodesic(1).cdf(t).unwrap() - t / PI).abs() < 1e-13);
            assert!((SphereSpec::geodesic(2).cdf(t).unwrap() - (1.0 - t.cos()) / 2.0).abs() < 1e-13);
            let s = 2.0 * i as f64 / 20.0;
            assert!((SphereSpec::euclidean(2).cdf(s).unwrap() - s * s / 4.0).abs() < 1e-13);
        }
        assert_eq!(SphereSpec::geodesic(5).cdf(PI).unwrap(), 1.0);
        assert!(SphereSpec::geodesic(2).cdf(3.5).is_err());
        assert!(SphereSpec::euclidean(2).cdf(-0.1).is_err());
    }

    #[test]
    fn beta_reduction_matches_direct_integration() {
        let rule = GaussLegendre::new(256);
        for n in 1..=6 {
            let s = SphereSpec::geodesic(n);
            let k = n as i32 - 1;
            let total = rule.integrate_on(0.0, PI, |x| x.sin().powi(k));
            for &t in &[0.3, 1.0, 2.0, 2.9] {
                let direct = rule.integrate_on(0.0, t, |x| x.sin().powi(k)) / total;
                assert!((s.cdf(t).unwrap() - direct).abs() < 1e-12, "n={n} t={t}");
                let chord = 2.0 * (t / 2.0).sin();
                assert!((SphereSpec::euclidean(n).cdf(chord).unwrap() - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn closed_form_quantiles() {
        for i in 0..=20 {
            let u = i as f64 / 20.0;
            let e1 = SphereSpec::euclidean(1).quantile(u).unwrap();
            assert!((e1 - 2.0 * (u * PI / 2.0).sin()).abs() < 1e-10);
            let g2 = SphereSpec::geodesic(2).quantile(u).unwrap();
            assert!((g2 - (1.0 - 2.0 * u).acos()).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_sphere_step() {
        let s = SphereSpec::geodesic(0);
        assert_eq!(s.cdf(1.0).unwrap(), 0.5);
        assert_eq!(s.cdf(PI).unwrap(), 1.0);
        assert_eq!(s.quantile(0.5).unwrap(), 0.0);
        assert_eq!(s.quantile(0.5000001).unwrap(), PI);
        assert!(s.quantile(1.5).is_err());
    }

    #[test]
    fn four_diameters() {
        let cfg = QuadratureConfig::default();
        let cases = [
            (SphereSpec::geodesic(0), PI / 2f64.powf(0.25)),
            (SphereSpec::geodesic(1), PI / 5f64.powf(0.25)),
            (SphereSpec::geodesic(2), (24.0 - 6.0 * PI * PI + PI.powi(4) / 2.0).powf(0.25)),
            (SphereSpec::euclidean(0), 2f64.powf(0.75)),
            (SphereSpec::euclidean(1), 2.0 * 0.375f64.powf(0.25)),
            (SphereSpec::euclidean(2), 2.0 / 3f64.powf(0.25)),
        ];
        for (s, want) in cases {
            assert!((s.diam_p(4.0, &cfg).unwrap() - want).abs() < 1e-10, "{s:?}");
        }
        assert_eq!(SphereSpec::euclidean(3).diam_p(f64::INFINITY, &cfg).unwrap(), 2.0);
    }

    #[test]
    fn exact_values() {
        assert_eq!(exact_gw42_euclidean(3, 3).unwrap(), 0.0);
        let want = (0.5f64.sqrt()) * (5.0 / 6.0 - PI * PI / 16.0).powf(0.25);
        assert!((exact_gw42_euclidean(1, 2).unwrap() - want).abs() < 1e-13);
        assert!((exact_gw42_euclidean(1, 3).unwrap() - (11.0f64 / 144.0).powf(0.25)).abs() < 1e-13);
        let want = 0.5f64.sqrt() * (1.5 - 8.0 / (PI * PI)).powf(0.25);
        assert!((exact_gw42_euclidean(0, 1).unwrap() - want).abs() < 1e-13);
        assert!(exact_gw42_euclidean(2, 1).is_err());
        assert!((equatorial_dis42_euclidean(0, 2).unwrap() - 2.0 * (5.0f64 / 24.0).powf(0.25)).abs() < 1e-13);
    }

    #[test]
    fn projection_norm_values() {
        assert_eq!(mean_projection_norm(4, 4).unwrap(), 1.0);
        assert!((mean_projection_norm(0, 1).unwrap() - 2.0 / PI).abs() < 1e-14);
        assert!((mean_projection_norm(1, 3).unwrap() - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn geodesic_equatorial_exact_case() {
        let cfg = QuadratureConfig::default();
        let v = equatorial_dis42_geodesic(0, 1, &cfg).unwrap();
        assert!((v.value - 0.2f64.powf(0.25) * PI).abs() < 1e-15);
        assert_eq!(equatorial_dis42_geodesic(2, 2, &cfg).unwrap().value, 0.0);
    }

    #[test]
    fn config_validation() {
        let cfg = QuadratureConfig { node_count: 8, ..Default::default() };
        assert!(SphereSpec::geodesic(2).diam_p(4.0, &cfg).is_err());
    }
}
