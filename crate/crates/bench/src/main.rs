use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gw_bench::config::{Dims, Experiment, ExperimentConfig, Sampler, SolverKind, Weights};
use gw_bench::experiments::{cmd_bounds, cmd_distortion, cmd_exact, cmd_solve, summary_json};
use gw_bench::output::{sibling, write_groups_csv, write_rows_csv, write_tables_csv};
use gw_bench::{run_convergence, run_heatmap, run_tables, summarize, BenchError};
use gw_core::lambda::parse_exponent;
use gw_core::{MetricKind, PqParams, QuadratureConfig, Seed};

#[derive(Parser)]
#[command(name = "gw-bench", version, about = "Gromov-Wasserstein distances between spheres")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// d_GW4,2 between Euclidean spheres in closed form (geodesic: equatorial upper bound).
    Exact(PairArgs),
    /// DLB, SLB, TLB and the equatorial upper bound between two spheres (not halved).
    Bounds(PairArgs),
    /// Empirical distortion of the equatorial coupling.
    Distortion {
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long, default_value_t = 1000)]
        points: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Solve one sampled instance and print the result as JSON.
    Solve {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Bound tables for 𝕊⁰ vs 𝕊¹ and 𝕊¹ vs 𝕊², geodesic and Euclidean.
    Tables(RunArgs),
    /// Estimates against sample size.
    Convergence(RunArgs),
    /// Estimates over a grid of dimension pairs.
    Heatmap(RunArgs),
}

#[derive(Args)]
struct PairArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value = "euclidean")]
    metric: MetricKind,
    #[arg(long, default_value = "4", value_parser = parse_exponent)]
    p: f64,
    #[arg(long, default_value = "2", value_parser = parse_exponent)]
    q: f64,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    metric: Option<MetricKind>,
    #[arg(long, value_parser = parse_exponent)]
    p: Option<f64>,
    #[arg(long, value_parser = parse_exponent)]
    q: Option<f64>,
    #[arg(long, value_enum)]
    sampler: Option<Sampler>,
    #[arg(long, value_enum)]
    weights: Option<Weights>,
    #[arg(long, value_enum)]
    solver: Option<SolverKind>,
    /// Dimension pair M,N; repeat for several.
    #[arg(long = "pair", value_parser = parse_pair)]
    pairs: Vec<(usize, usize)>,
    /// Every pair with both dimensions in LO,HI.
    #[arg(long, value_parser = parse_pair, conflicts_with = "pairs")]
    range: Option<(usize, usize)>,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    points: Vec<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// Falls back to the config, then GW_SPHERES_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    reference_size: Option<usize>,
    /// CSV output path; the JSON summary goes next to it. CSV goes to stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    paper_scale: bool,
    /// Include wall times in the CSV (makes it differ between runs).
    #[arg(long)]
    timings: bool,
    /// Also compute the TLB of each sampled instance and check estimate ≥ TLB/2.
    #[arg(long)]
    audit: bool,
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected M,N, got {s:?}"))?;
    let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    Ok((num(a)?, num(b)?))
}

impl RunArgs {
    fn resolve(&self, experiment: Experiment) -> Result<ExperimentConfig, BenchError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::for_experiment(experiment),
        };
        cfg.experiment = experiment;
        if let Some(v) = self.metric {
            cfg.metric = v;
        }
        if self.p.is_some() || self.q.is_some() {
            cfg.pq = PqParams::new(self.p.unwrap_or(cfg.pq.p), self.q.unwrap_or(cfg.pq.q))?;
        }
        if let Some(v) = self.sampler {
            cfg.sampler = v;
        }
        if let Some(v) = self.weights {
            cfg.weights = v;
        }
        if let Some(v) = self.solver {
            cfg.solver = v;
        }
        if !self.pairs.is_empty() {
            cfg.dims = Dims::Pairs(self.pairs.clone());
        }
        if let Some(range) = self.range {
            cfg.dims = Dims::Range { range };
        }
        if !self.points.is_empty() {
            cfg.sample_sizes = self.points.clone();
        }
        if self.trials.is_some() {
            cfg.trials = self.trials;
        }
        if let Some(s) = self.seed {
            cfg.seed = Some(Seed(s));
        }
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if self.reference_size.is_some() {
            cfg.reference_size = self.reference_size;
        }
        if let Some(out) = &self.out {
            cfg.output_path = Some(out.to_string_lossy().into_owned());
        }
        if let Some(j) = self.jobs {
            cfg.jobs = j;
        }
        cfg.paper_scale |= self.paper_scale;
        cfg.timings |= self.timings;
        cfg.audit |= self.audit;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_to(path: &Path, f: impl FnOnce(&mut std::fs::File) -> Result<(), BenchError>) -> Result<(), BenchError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut file = std::fs::File::create(path)?;
    f(&mut file)
}

fn run_grid(experiment: Experiment, args: &RunArgs) -> Result<(), BenchError> {
    let cfg = args.resolve(experiment)?;
    let rows = match experiment {
        Experiment::Heatmap => run_heatmap(&cfg)?,
        _ => run_convergence(&cfg)?,
    };
    let groups = summarize(&rows);
    let summary = summary_json(experiment.name(), &cfg, &groups)?;
    match &cfg.output_path {
        Some(path) => {
            let path = PathBuf::from(path);
            write_to(&path, |f| write_rows_csv(&rows, cfg.timings, f))?;
            write_to(&sibling(&path, ".json"), |f| Ok(f.write_all(summary.as_bytes())?))?;
            if experiment == Experiment::Heatmap {
                write_to(&sibling(&path, "_grid.csv"), |f| write_groups_csv(&groups, f))?;
            }
            let failed = rows.iter().filter(|r| !r.status.is_empty()).count();
            eprintln!("{} trials ({failed} failed) written to {}", rows.len(), path.display());
        }
        None => write_rows_csv(&rows, cfg.timings, std::io::stdout().lock())?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::Exact(a) => {
            println!("{}", cmd_exact(a.m, a.n, a.metric, &QuadratureConfig::default())?);
        }
        Command::Bounds(a) => {
            let report = cmd_bounds(a.m, a.n, a.metric, PqParams::new(a.p, a.q)?, &QuadratureConfig::default())?;
            println!("{}", report.to_json()?);
        }
        Command::Distortion { pair: a, points, seed } => {
            let seed = match seed {
                Some(s) => Seed(s),
                None => ExperimentConfig::default().seed()?,
            };
            let r = cmd_distortion(a.m, a.n, a.metric, PqParams::new(a.p, a.q)?, points, seed)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Command::Solve { m, n, run } => {
            let cfg = run.resolve(Experiment::Convergence)?;
            let points = run.points.first().copied().unwrap_or(100);
            let r = cmd_solve(m, n, points, &cfg)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Command::Tables(args) => {
            let cfg = args.resolve(Experiment::Tables)?;
            let rows = run_tables(&cfg)?;
            match &cfg.output_path {
                Some(path) => write_to(Path::new(path), |f| write_tables_csv(&rows, f))?,
                None => write_tables_csv(&rows, std::io::stdout().lock())?,
            }
        }
        Command::Convergence(args) => run_grid(Experiment::Convergence, &args)?,
        Command::Heatmap(args) => run_grid(Experiment::Heatmap, &args)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
