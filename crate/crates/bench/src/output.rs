//! CSV and JSON writers. Floats use 17 significant digits so every value round-trips.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::experiments::{GroupSummary, TableRow};
use crate::pipeline::ResultRow;
use crate::BenchError;

pub const SCHEMA_VERSION: u32 = 1;

pub const ROW_HEADER: [&str; 23] = [
    "schema_version",
    "experiment",
    "m",
    "n",
    "points",
    "trial",
    "sampler",
    "weights",
    "solver",
    "metric",
    "p",
    "q",
    "seed",
    "estimate",
    "exact",
    "error",
    "error_kind",
    "iterations",
    "converged",
    "tlb_half",
    "audit_ok",
    "wall_time_seconds",
    "status",
];

pub fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

fn opt<T>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

/// One line per trial. wall_time_seconds stays blank unless `timings` is set, which
/// keeps the file byte-identical across runs with the same seed.
pub fn write_rows_csv<W: Write>(rows: &[ResultRow], timings: bool, out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ROW_HEADER)?;
    for r in rows {
        w.write_record([
            SCHEMA_VERSION.to_string(),
            r.experiment.to_string(),
            r.key.m.to_string(),
            r.key.n.to_string(),
            r.key.points.to_string(),
            r.key.trial.to_string(),
            r.spec.sampler.name().to_string(),
            r.spec.weights.name().to_string(),
            r.spec.solver.name().to_string(),
            r.spec.metric.name().to_string(),
            fmt_f64(r.spec.pq.p),
            fmt_f64(r.spec.pq.q),
            r.seed.0.to_string(),
            opt(r.estimate, fmt_f64),
            opt(r.exact, fmt_f64),
            opt(r.error, |e| fmt_f64(e.0)),
            opt(r.error, |e| e.1.name().to_string()),
            opt(r.iterations, |v| v.to_string()),
            opt(r.converged, |v| v.to_string()),
            opt(r.tlb_half, fmt_f64),
            opt(r.audit_ok, |v| v.to_string()),
            if timings { fmt_f64(r.wall_time_seconds) } else { String::new() },
            r.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One line per (m, n, N) group: the long form of the heatmap grid.
pub fn write_groups_csv<W: Write>(groups: &[GroupSummary], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "schema_version",
        "m",
        "n",
        "points",
        "trials",
        "failures",
        "mean_estimate",
        "q10",
        "q90",
        "exact",
        "error",
        "error_kind",
    ])?;
    for g in groups {
        w.write_record([
            SCHEMA_VERSION.to_string(),
            g.m.to_string(),
            g.n.to_string(),
            g.points.to_string(),
            g.trials.to_string(),
            g.failures.to_string(),
            opt(g.mean_estimate, fmt_f64),
            opt(g.q10, fmt_f64),
            opt(g.q90, fmt_f64),
            opt(g.exact, fmt_f64),
            opt(g.error, fmt_f64),
            g.error_kind.unwrap_or_default().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_tables_csv<W: Write>(rows: &[TableRow], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "schema_version",
        "table",
        "metric",
        "m",
        "n",
        "dlb_half",
        "slb_half",
        "tlb_half",
        "upper_half",
        "upper_kind",
        "upper_std_error",
    ])?;
    for r in rows {
        w.write_record([
            SCHEMA_VERSION.to_string(),
            r.table.to_string(),
            r.metric.name().to_string(),
            r.m.to_string(),
            r.n.to_string(),
            fmt_f64(r.dlb_half),
            fmt_f64(r.slb_half),
            fmt_f64(r.tlb_half),
            fmt_f64(r.upper_half),
            r.upper_kind.name().to_string(),
            fmt_f64(r.upper_std_error),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `base` with its extension replaced by `suffix`, e.g. run.csv -> run_grid.csv.
pub fn sibling(base: &Path, suffix: &str) -> PathBuf {
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    base.with_file_name(format!("{stem}{suffix}"))
}
