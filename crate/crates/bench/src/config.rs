//! Experiment configuration: JSON files, CLI overrides and scale-dependent defaults.

use std::path::Path;

use gw_core::{MetricKind, PqParams, Seed};
use serde::{Deserialize, Serialize};

use crate::BenchError;

/// Environment variable consulted when neither the CLI nor the config sets a seed.
pub const SEED_ENV: &str = "GW_SPHERES_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Tables,
    Convergence,
    Heatmap,
    Exact,
    Bounds,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::Tables => "tables",
            Self::Convergence => "convergence",
            Self::Heatmap => "heatmap",
            Self::Exact => "exact",
            Self::Bounds => "bounds",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    Random,
    Fps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Weights {
    Uniform,
    Voronoi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Cgd,
    Entropic,
}

macro_rules! label {
    ($t:ty, $($v:ident => $s:literal),+) => {
        impl $t {
            pub fn name(self) -> &'static str {
                match self { $(Self::$v => $s),+ }
            }
        }
    };
}

label!(Sampler, Random => "random", Fps => "fps");
label!(Weights, Uniform => "uniform", Voronoi => "voronoi");
label!(SolverKind, Cgd => "cgd", Entropic => "entropic");

/// Dimension pairs to run: an explicit list of (m, n), or every pair in a square range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Dims {
    Pairs(Vec<(usize, usize)>),
    Range { range: (usize, usize) },
}

impl Dims {
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        match self {
            Dims::Pairs(p) => p.clone(),
            Dims::Range { range: (lo, hi) } => (*lo..=*hi).flat_map(|m| (*lo..=*hi).map(move |n| (m, n))).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub dims: Dims,
    pub sample_sizes: Vec<usize>,
    /// None picks the scale default for the experiment.
    pub trials: Option<usize>,
    pub sampler: Sampler,
    pub weights: Weights,
    pub solver: SolverKind,
    /// None falls back to GW_SPHERES_SEED, then 0.
    pub seed: Option<Seed>,
    pub pq: PqParams,
    pub metric: MetricKind,
    pub epsilon: f64,
    /// Size of the uniform cloud FPS selects from and Voronoi cells are counted on.
    /// None picks the scale default.
    pub reference_size: Option<usize>,
    pub paper_scale: bool,
    /// Thread count for concurrent trials; 0 uses every core.
    pub jobs: usize,
    pub audit: bool,
    pub timings: bool,
    pub output_path: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::for_experiment(Experiment::Convergence)
    }
}

impl ExperimentConfig {
    pub fn for_experiment(experiment: Experiment) -> Self {
        let (dims, sample_sizes) = match experiment {
            Experiment::Heatmap => (Dims::Range { range: (1, 7) }, vec![100]),
            _ => (Dims::Pairs(vec![(1, 2), (1, 3), (2, 3)]), (10..=200).step_by(10).collect()),
        };
        Self {
            experiment,
            dims,
            sample_sizes,
            trials: None,
            sampler: Sampler::Fps,
            weights: Weights::Voronoi,
            solver: SolverKind::Cgd,
            seed: None,
            pq: PqParams::four_two(),
            metric: MetricKind::Euclidean,
            epsilon: 0.01,
            reference_size: None,
            paper_scale: false,
            jobs: 0,
            audit: false,
            timings: false,
            output_path: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String, BenchError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.trials == Some(0) {
            return Err(BenchError::Config("trials must be at least 1".into()));
        }
        if let Some(&n) = self.sample_sizes.iter().find(|&&n| n < 2) {
            return Err(BenchError::Config(format!("sample sizes must be at least 2, got {n}")));
        }
        if self.sample_sizes.is_empty() && matches!(self.experiment, Experiment::Convergence | Experiment::Heatmap) {
            return Err(BenchError::Config("no sample sizes".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(BenchError::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.reference_size == Some(0) {
            return Err(BenchError::Config("reference_size must be at least 1".into()));
        }
        let r = self.reference_size();
        if let Some(&n) = self.sample_sizes.iter().find(|&&n| n > r) {
            if self.sampler == Sampler::Fps {
                return Err(BenchError::Config(format!("FPS cannot pick {n} points from a reference of {r}")));
            }
        }
        Ok(())
    }

    pub fn trials(&self) -> usize {
        self.trials.unwrap_or(match (self.paper_scale, self.experiment) {
            (false, _) => 5,
            (true, Experiment::Heatmap) => 10,
            (true, _) => 20,
        })
    }

    pub fn reference_size(&self) -> usize {
        self.reference_size.unwrap_or(if self.paper_scale { 1_000_000 } else { 100_000 })
    }

    /// Monte Carlo sample count for the geodesic equatorial upper bound in the tables.
    pub fn mc_samples(&self) -> usize {
        if self.paper_scale { 1_000_000 } else { 100_000 }
    }

    pub fn seed(&self) -> Result<Seed, BenchError> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map(Seed)
                .map_err(|e| BenchError::Config(format!("{SEED_ENV}={v:?}: {e}"))),
            Err(_) => Ok(Seed(0)),
        }
    }

    /// Whether the closed form applies to the configured metric and exponents.
    pub fn has_exact(&self) -> bool {
        self.metric == MetricKind::Euclidean && self.pq == PqParams::four_two()
    }
}
