//! One benchmark trial: sample two spheres, weight the samples, solve, compare.

use std::time::Instant;

use gw_core::bounds::tlb;
use gw_core::sampling::{
    farthest_point_sample, sample_sphere_uniform, voronoi_weights, voronoi_weights_from,
};
use gw_core::sphere::exact_gw42_euclidean;
use gw_core::{gw_cgd, gw_entropic, FiniteMMSpace, GwSolveParams, MetricKind, PqParams, Seed};

use crate::config::{ExperimentConfig, Sampler, SolverKind, Weights};
use crate::BenchError;

/// Settings shared by every trial of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSpec {
    pub sampler: Sampler,
    pub weights: Weights,
    pub solver: SolverKind,
    pub metric: MetricKind,
    pub pq: PqParams,
    pub epsilon: f64,
    pub reference_size: usize,
    pub audit: bool,
}

impl TrialSpec {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            sampler: cfg.sampler,
            weights: cfg.weights,
            solver: cfg.solver,
            metric: cfg.metric,
            pq: cfg.pq,
            epsilon: cfg.epsilon,
            reference_size: cfg.reference_size(),
            audit: cfg.audit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct TrialKey {
    pub m: usize,
    pub n: usize,
    pub points: usize,
    pub trial: usize,
}

impl TrialKey {
    /// Seed owned by this trial: the run seed split along (m, n, N, trial) by SplitMix64.
    pub fn seed(&self, run: Seed) -> Seed {
        run.derive_path(&[self.m as u64, self.n as u64, self.points as u64, self.trial as u64])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// (estimate − exact) / exact.
    Relative,
    /// estimate − exact, used where exact = 0.
    Absolute,
}

impl ErrorKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Relative => "relative",
            Self::Absolute => "absolute",
        }
    }
}

/// (estimate − exact)/exact, or the absolute error when exact is 0.
pub fn error_vs_exact(estimate: f64, exact: f64) -> (f64, ErrorKind) {
    if exact == 0.0 {
        (estimate - exact, ErrorKind::Absolute)
    } else {
        ((estimate - exact) / exact, ErrorKind::Relative)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: &'static str,
    pub key: TrialKey,
    pub spec: TrialSpec,
    pub seed: Seed,
    /// Solver value / 2, an upper bound for d_GW of the sampled spaces.
    pub estimate: Option<f64>,
    pub exact: Option<f64>,
    pub error: Option<(f64, ErrorKind)>,
    pub tlb_half: Option<f64>,
    pub audit_ok: Option<bool>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub wall_time_seconds: f64,
    /// Empty on success, otherwise the failure message.
    pub status: String,
}

fn sample_space(dim: usize, points: usize, spec: &TrialSpec, seed: Seed) -> Result<FiniteMMSpace, BenchError> {
    let (cloud, weights) = match spec.sampler {
        Sampler::Random => {
            let cloud = sample_sphere_uniform(dim, points, seed.derive(0))?;
            let w = match spec.weights {
                Weights::Uniform => FiniteMMSpace::uniform_weights(points),
                Weights::Voronoi => voronoi_weights(&cloud, spec.reference_size, seed.derive(1))?,
            };
            (cloud, w)
        }
        Sampler::Fps => {
            let reference = sample_sphere_uniform(dim, spec.reference_size, seed.derive(0))?;
            let idx = farthest_point_sample(&reference, points, spec.metric, seed.derive(2))?;
            let cloud = reference.select(&idx);
            let w = match spec.weights {
                Weights::Uniform => FiniteMMSpace::uniform_weights(points),
                Weights::Voronoi => voronoi_weights_from(&cloud, &reference)?,
            };
            (cloud, w)
        }
    };
    Ok(cloud.to_space(spec.metric, weights)?)
}

/// The two sampled spaces of a trial. 𝕊ᵐ uses sub-stream 0 and 𝕊ⁿ sub-stream 1 of the
/// trial seed.
pub fn sample_instance(key: TrialKey, spec: &TrialSpec, seed: Seed) -> Result<(FiniteMMSpace, FiniteMMSpace), BenchError> {
    let x = sample_space(key.m, key.points, spec, seed.derive(0))?;
    let y = sample_space(key.n, key.points, spec, seed.derive(1))?;
    Ok((x, y))
}

pub fn exact_for(spec: &TrialSpec, m: usize, n: usize) -> Option<f64> {
    let closed_form = spec.metric == MetricKind::Euclidean && spec.pq == PqParams::four_two();
    closed_form.then(|| exact_gw42_euclidean(m.min(n), m.max(n)).ok()).flatten()
}

pub fn run_trial(experiment: &'static str, key: TrialKey, spec: &TrialSpec, run_seed: Seed) -> ResultRow {
    let seed = key.seed(run_seed);
    let exact = exact_for(spec, key.m, key.n);
    let mut row = ResultRow {
        experiment,
        key,
        spec: *spec,
        seed,
        estimate: None,
        exact,
        error: None,
        tlb_half: None,
        audit_ok: None,
        iterations: None,
        converged: None,
        wall_time_seconds: 0.0,
        status: String::new(),
    };
    let start = Instant::now();
    let outcome = (|| -> Result<(), BenchError> {
        let (x, y) = sample_instance(key, spec, seed)?;
        let params = GwSolveParams { epsilon: spec.epsilon, ..GwSolveParams::with_pq(spec.pq) };
        let report = match spec.solver {
            SolverKind::Cgd => gw_cgd(&x, &y, &params)?,
            SolverKind::Entropic => gw_entropic(&x, &y, &params)?,
        };
        let estimate = report.value / 2.0;
        row.estimate = Some(estimate);
        row.iterations = Some(report.iterations);
        row.converged = Some(report.converged);
        row.error = exact.map(|e| error_vs_exact(estimate, e));
        if spec.audit {
            let half = tlb(&x, &y, spec.pq.p, spec.pq.q)?.value / 2.0;
            row.tlb_half = Some(half);
            row.audit_ok = Some(estimate >= half - 1e-6);
        }
        Ok(())
    })();
    row.wall_time_seconds = start.elapsed().as_secs_f64();
    if let Err(e) = outcome {
        row.status = e.to_string();
    }
    row
}
