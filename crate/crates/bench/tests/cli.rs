use std::path::Path;
use std::process::{Command, Output};

use gw_bench::SEED_ENV;

fn bench(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gw-bench"));
    cmd.args(args).env_remove(SEED_ENV);
    if let Some(s) = env_seed {
        cmd.env(SEED_ENV, s);
    }
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Seed column of every data row of a rows CSV.
fn seeds(csv: &str) -> Vec<String> {
    csv.lines().skip(1).map(|l| l.split(',').nth(12).unwrap().to_string()).collect()
}

const RUN: [&str; 9] = ["convergence", "--pair", "1,2", "--points", "10", "--trials", "2", "--reference-size", "2000"];

#[test]
fn exact_prints_twelve_digits() {
    assert_eq!(stdout(&bench(&["exact", "--m", "1", "--n", "2"], None)).trim(), "0.482326341424");
    assert_eq!(stdout(&bench(&["exact", "--m", "3", "--n", "1"], None)).trim(), "0.525723690922");
    let g = stdout(&bench(&["exact", "--m", "0", "--n", "1", "--metric", "geodesic"], None));
    assert!(g.starts_with("upper bound only: 1.050"), "{g}");
}

#[test]
fn bounds_prints_the_hierarchy() {
    let out = stdout(&bench(&["bounds", "--m", "1", "--n", "2"], None));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!((v["dlb"].as_f64().unwrap() - 0.374).abs() < 2e-3);
    assert!((v["slb"].as_f64().unwrap() - 0.549).abs() < 2e-3);
    assert_eq!(v["ordering_ok"], true);
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"seed": 11}"#).unwrap();
    let cfg = cfg.to_str().unwrap();
    let with = |extra: &[&str], env: Option<&str>| {
        let mut args = RUN.to_vec();
        args.extend_from_slice(extra);
        seeds(&stdout(&bench(&args, env)))
    };
    let zero = with(&[], None);
    let env = with(&[], Some("5"));
    let file = with(&["--config", cfg], Some("5"));
    let cli = with(&["--config", cfg, "--seed", "5"], Some("7"));
    assert_eq!(zero, with(&["--seed", "0"], None));
    assert_eq!(env, with(&["--seed", "5"], None));
    assert_eq!(file, with(&["--seed", "11"], None));
    assert_eq!(cli, env);
    assert_ne!(zero, env);
    assert_ne!(env, file);
}

#[test]
fn out_writes_csv_summary_and_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested").join("heat.csv");
    bench(
        &["heatmap", "--range", "1,2", "--points", "12", "--trials", "2", "--reference-size", "2000", "--out", out.to_str().unwrap()],
        None,
    );
    let rows = std::fs::read_to_string(&out).unwrap();
    assert!(rows.starts_with("schema_version,experiment,m,n,points,trial"));
    assert_eq!(rows.lines().count(), 1 + 4 * 2);
    assert!(rows.lines().skip(1).all(|l| l.starts_with("1,heatmap,")));
    let grid = std::fs::read_to_string(dir.path().join("nested/heat_grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 4);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(Path::new(&dir.path().join("nested/heat.json"))).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["groups"].as_array().unwrap().len(), 4);
    assert_eq!(summary["groups"][0]["error_kind"], "absolute");
}

#[test]
fn timings_only_on_request() {
    let plain = stdout(&bench(&RUN, None));
    let wall = |csv: &str| csv.lines().nth(1).unwrap().split(',').nth(21).unwrap().to_string();
    assert_eq!(wall(&plain), "");
    let mut args = RUN.to_vec();
    args.push("--timings");
    assert!(wall(&stdout(&bench(&args, None))).parse::<f64>().unwrap() >= 0.0);
}

#[test]
fn tables_and_distortion() {
    let t = stdout(&bench(&["tables"], None));
    assert_eq!(t.lines().count(), 5);
    let d = stdout(&bench(&["distortion", "--m", "1", "--n", "2", "--points", "300", "--seed", "2"], None));
    let v: serde_json::Value = serde_json::from_str(&d).unwrap();
    let (est, se, cf) = (v["distortion"].as_f64().unwrap(), v["std_error"].as_f64().unwrap(), v["closed_form"].as_f64().unwrap());
    assert!((est - cf).abs() < 4.0 * se + 0.01, "{est} ± {se} vs {cf}");
}

#[test]
fn rejects_bad_input() {
    let bad = |args: &[&str]| !Command::new(env!("CARGO_BIN_EXE_gw-bench")).args(args).output().unwrap().status.success();
    assert!(bad(&["convergence", "--trials", "0"]));
    assert!(bad(&["convergence", "--points", "1"]));
    assert!(bad(&["exact", "--m", "1"]));
    assert!(bad(&["bounds", "--m", "1", "--n", "2", "--p", "0.5"]));
}
