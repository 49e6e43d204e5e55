//! Experiment drivers behind the CLI subcommands.

use gw_core::bounds::{dlb, hierarchy_report_with_upper, slb, tlb_mm, HierarchyReport};
use gw_core::sampling::{diagonal_distortion_with_se, equatorial_coupling_empirical, sample_sphere_nondegenerate};
use gw_core::sphere::{equatorial_dis42_euclidean, equatorial_dis42_geodesic, exact_gw42_euclidean, McEstimate};
use gw_core::{MetricKind, PqParams, QuadratureConfig, Seed, SphereSpec};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, SolverKind};
use crate::pipeline::{error_vs_exact, run_trial, ErrorKind, ResultRow, TrialKey, TrialSpec};
use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UpperKind {
    /// The closed-form d_GW value, attained by the equatorial coupling.
    Exact,
    /// Half the equatorial distortion in closed form, an upper bound only.
    UpperBound,
    /// Half the equatorial distortion estimated by Monte Carlo, an upper bound only.
    UpperBoundMc,
}

impl UpperKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::UpperBound => "upper_bound",
            Self::UpperBoundMc => "upper_bound_mc",
        }
    }
}

/// One sphere pair of the bound tables. Every value is halved to the d_GW scale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub table: u8,
    pub metric: MetricKind,
    pub m: usize,
    pub n: usize,
    pub dlb_half: f64,
    pub slb_half: f64,
    pub tlb_half: f64,
    pub upper_half: f64,
    pub upper_kind: UpperKind,
    pub upper_std_error: f64,
}

/// Equatorial coupling distortion between spheres of the given metric, closed form
/// where one exists and Monte Carlo otherwise.
pub fn equatorial_distortion(m: usize, n: usize, metric: MetricKind, cfg: &QuadratureConfig) -> Result<McEstimate, BenchError> {
    Ok(match metric {
        MetricKind::Euclidean => McEstimate::exact(equatorial_dis42_euclidean(m, n)?),
        MetricKind::Geodesic => equatorial_dis42_geodesic(m, n, cfg)?,
    })
}

pub fn table_row(table: u8, m: usize, n: usize, metric: MetricKind, qcfg: &QuadratureConfig) -> Result<TableRow, BenchError> {
    let (x, y) = (SphereSpec::new(m, metric), SphereSpec::new(n, metric));
    let upper = equatorial_distortion(m, n, metric, qcfg)?;
    let upper_kind = match (metric, upper.std_error > 0.0) {
        (MetricKind::Euclidean, _) => UpperKind::Exact,
        (_, false) => UpperKind::UpperBound,
        (_, true) => UpperKind::UpperBoundMc,
    };
    Ok(TableRow {
        table,
        metric,
        m,
        n,
        dlb_half: dlb(x, y, 4.0, 2.0)? / 2.0,
        slb_half: slb(x, y, 4.0, 2.0)? / 2.0,
        tlb_half: tlb_mm(x, y, 4.0, 2.0)? / 2.0,
        upper_half: upper.value / 2.0,
        upper_kind,
        upper_std_error: upper.std_error / 2.0,
    })
}

/// Bound tables for 𝕊⁰ vs 𝕊¹ and 𝕊¹ vs 𝕊², table 1 geodesic and table 2 Euclidean.
pub fn run_tables(cfg: &ExperimentConfig) -> Result<Vec<TableRow>, BenchError> {
    let seed = cfg.seed()?;
    let mut rows = Vec::new();
    for (table, metric) in [(1u8, MetricKind::Geodesic), (2, MetricKind::Euclidean)] {
        for (m, n) in [(0usize, 1usize), (1, 2)] {
            let qcfg = QuadratureConfig {
                mc_samples: cfg.mc_samples(),
                seed: seed.derive_path(&[table as u64, m as u64, n as u64]).0,
                ..QuadratureConfig::default()
            };
            rows.push(table_row(table, m, n, metric, &qcfg)?);
        }
    }
    Ok(rows)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, BenchError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| BenchError::Config(format!("thread pool: {e}")))
}

fn run_keys(experiment: &'static str, cfg: &ExperimentConfig, keys: Vec<TrialKey>) -> Result<Vec<ResultRow>, BenchError> {
    cfg.validate()?;
    let spec = TrialSpec::from_config(cfg);
    let seed = cfg.seed()?;
    let mut rows: Vec<ResultRow> = pool(cfg.jobs)?.install(|| keys.into_par_iter().map(|k| run_trial(experiment, k, &spec, seed)).collect());
    rows.sort_by_key(|r| r.key);
    Ok(rows)
}

fn trial_keys(pairs: &[(usize, usize)], sizes: &[usize], trials: usize) -> Vec<TrialKey> {
    let mut keys = Vec::new();
    for &(m, n) in pairs {
        for &points in sizes {
            for trial in 0..trials {
                keys.push(TrialKey { m, n, points, trial });
            }
        }
    }
    keys
}

/// Estimates against the number of sampled points for each dimension pair.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, BenchError> {
    run_keys("convergence", cfg, trial_keys(&cfg.dims.pairs(), &cfg.sample_sizes, cfg.trials()))
}

/// Estimates for every dimension pair of the configured range at fixed N.
pub fn run_heatmap(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, BenchError> {
    run_keys("heatmap", cfg, trial_keys(&cfg.dims.pairs(), &cfg.sample_sizes, cfg.trials()))
}

/// Trials sharing (m, n, N), summarised with the mean and the central 80% band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub m: usize,
    pub n: usize,
    pub points: usize,
    pub trials: usize,
    pub failures: usize,
    pub mean_estimate: Option<f64>,
    pub q10: Option<f64>,
    pub q90: Option<f64>,
    pub exact: Option<f64>,
    /// (mean − exact)/exact, or mean − exact where exact is 0 (see `error_kind`).
    pub error: Option<f64>,
    pub error_kind: Option<&'static str>,
    pub mean_wall_time_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit_failures: Option<usize>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], u: f64) -> f64 {
    let h = u * (sorted.len() - 1) as f64;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(rows: &[ResultRow]) -> Vec<GroupSummary> {
    let mut out: Vec<GroupSummary> = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let k = rows[start].key;
        let end = start + rows[start..].iter().take_while(|r| (r.key.m, r.key.n, r.key.points) == (k.m, k.n, k.points)).count();
        let group = &rows[start..end];
        let mut est: Vec<f64> = group.iter().filter_map(|r| r.estimate).collect();
        est.sort_by(f64::total_cmp);
        let mean = (!est.is_empty()).then(|| est.iter().sum::<f64>() / est.len() as f64);
        let exact = group[0].exact;
        let err = mean.zip(exact).map(|(m, e)| error_vs_exact(m, e));
        let audited: Vec<bool> = group.iter().filter_map(|r| r.audit_ok).collect();
        out.push(GroupSummary {
            m: k.m,
            n: k.n,
            points: k.points,
            trials: group.len(),
            failures: group.len() - est.len(),
            mean_estimate: mean,
            q10: (!est.is_empty()).then(|| quantile_sorted(&est, 0.1)),
            q90: (!est.is_empty()).then(|| quantile_sorted(&est, 0.9)),
            exact,
            error: err.map(|e| e.0),
            error_kind: err.map(|e| e.1.name()),
            mean_wall_time_seconds: group.iter().map(|r| r.wall_time_seconds).sum::<f64>() / group.len() as f64,
            audit_failures: (!audited.is_empty()).then(|| audited.iter().filter(|ok| !**ok).count()),
        });
        start = end;
    }
    out
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    schema_version: u32,
    experiment: &'a str,
    sampler: &'a str,
    weights: &'a str,
    solver: &'a str,
    seed: u64,
    trials: usize,
    reference_size: usize,
    config: &'a ExperimentConfig,
    groups: &'a [GroupSummary],
}

pub fn summary_json(experiment: &str, cfg: &ExperimentConfig, groups: &[GroupSummary]) -> Result<String, BenchError> {
    let doc = SummaryDoc {
        schema_version: crate::output::SCHEMA_VERSION,
        experiment,
        sampler: cfg.sampler.name(),
        weights: cfg.weights.name(),
        solver: cfg.solver.name(),
        seed: cfg.seed()?.0,
        trials: cfg.trials(),
        reference_size: cfg.reference_size(),
        config: cfg,
        groups,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// `v` with 12 significant digits.
pub fn twelve_digits(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let decimals = (11 - v.abs().log10().floor() as i32).max(0) as usize;
    format!("{v:.decimals$}")
}

/// The exact d_GW4,2 between Euclidean spheres; for geodesic spheres half the
/// equatorial distortion, labelled as an upper bound.
pub fn cmd_exact(m: usize, n: usize, metric: MetricKind, qcfg: &QuadratureConfig) -> Result<String, BenchError> {
    let (lo, hi) = (m.min(n), m.max(n));
    match metric {
        MetricKind::Euclidean => Ok(twelve_digits(exact_gw42_euclidean(lo, hi)?)),
        MetricKind::Geodesic => {
            let e = equatorial_dis42_geodesic(lo, hi, qcfg)?;
            if e.std_error > 0.0 {
                Ok(format!(
                    "upper bound only: {} (Monte Carlo, std error {}, {} samples)",
                    twelve_digits(e.value / 2.0),
                    twelve_digits(e.std_error / 2.0),
                    e.samples
                ))
            } else {
                Ok(format!("upper bound only: {}", twelve_digits(e.value / 2.0)))
            }
        }
    }
}

/// Lower-bound hierarchy between two spheres with the equatorial distortion as the
/// upper end (only available in the (4,2) case).
pub fn cmd_bounds(m: usize, n: usize, metric: MetricKind, pq: PqParams, qcfg: &QuadratureConfig) -> Result<HierarchyReport, BenchError> {
    let (lo, hi) = (m.min(n), m.max(n));
    let upper = if pq == PqParams::four_two() { Some(equatorial_distortion(lo, hi, metric, qcfg)?.value) } else { None };
    Ok(hierarchy_report_with_upper(SphereSpec::new(lo, metric), SphereSpec::new(hi, metric), pq, upper))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistortionReport {
    pub m: usize,
    pub n: usize,
    pub metric: MetricKind,
    #[serde(flatten)]
    pub pq: PqParams,
    pub points: usize,
    pub seed: u64,
    pub distortion: f64,
    pub std_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_form: Option<f64>,
}

/// dis_{p,q} of the empirical equatorial coupling on `points` samples of 𝕊ⁿ.
pub fn cmd_distortion(m: usize, n: usize, metric: MetricKind, pq: PqParams, points: usize, seed: Seed) -> Result<DistortionReport, BenchError> {
    let (lo, hi) = (m.min(n), m.max(n));
    let cloud = sample_sphere_nondegenerate(hi, lo, points, seed)?;
    let (x, y, _) = equatorial_coupling_empirical(&cloud, lo, metric)?;
    let est = diagonal_distortion_with_se(&x, &y, pq)?;
    let closed_form = match metric {
        MetricKind::Euclidean if pq == PqParams::four_two() => Some(equatorial_dis42_euclidean(lo, hi)?),
        MetricKind::Geodesic if pq == PqParams::four_two() && lo == 0 && hi == 1 => {
            Some(equatorial_dis42_geodesic(0, 1, &QuadratureConfig::default())?.value)
        }
        _ => None,
    };
    Ok(DistortionReport { m: lo, n: hi, metric, pq, points, seed: seed.0, distortion: est.value, std_error: est.std_error, closed_form })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub m: usize,
    pub n: usize,
    pub points: usize,
    pub sampler: &'static str,
    pub weights: &'static str,
    pub solver: &'static str,
    pub seed: u64,
    pub estimate: Option<f64>,
    pub exact: Option<f64>,
    pub error: Option<f64>,
    pub error_kind: Option<&'static str>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tlb_half: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
}

/// A single sampled instance solved once (trial 0 of the configured seed).
pub fn cmd_solve(m: usize, n: usize, points: usize, cfg: &ExperimentConfig) -> Result<SolveReport, BenchError> {
    cfg.validate()?;
    let spec = TrialSpec::from_config(cfg);
    let row = run_trial("solve", TrialKey { m, n, points, trial: 0 }, &spec, cfg.seed()?);
    Ok(SolveReport {
        m,
        n,
        points,
        sampler: cfg.sampler.name(),
        weights: cfg.weights.name(),
        solver: match cfg.solver {
            SolverKind::Cgd => "cgd",
            SolverKind::Entropic => "entropic",
        },
        seed: row.seed.0,
        estimate: row.estimate,
        exact: row.exact,
        error: row.error.map(|e| e.0),
        error_kind: row.error.map(|e: (f64, ErrorKind)| e.1.name()),
        iterations: row.iterations,
        converged: row.converged,
        tlb_half: row.tlb_half,
        status: (!row.status.is_empty()).then_some(row.status),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(twelve_digits(0.5262), "0.526200000000");
        assert_eq!(twelve_digits(1.0504), "1.05040000000");
        assert_eq!(twelve_digits(0.0), "0");
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert!((quantile_sorted(&v, 0.1) - 1.4).abs() < 1e-15);
        assert_eq!(quantile_sorted(&[2.0], 0.9), 2.0);
    }
}
