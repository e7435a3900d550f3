use std::path::{Path, PathBuf};
use std::process::Command;

use sha2::{Digest, Sha256};
use tallglmm::cli::main_with_args;
use tallglmm::simulate::itsa_formula;

fn run(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("tallglmm").chain(args.iter().copied()))
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn sha(path: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

/// Simulated ITSA data in `dir`; returns (csv, schema).
fn simulate(dir: &Path, name: &str, seed: u64) -> (PathBuf, PathBuf) {
    let csv = dir.join(format!("{name}.csv"));
    let seed = seed.to_string();
    assert_eq!(run(&["simulate", "itsa", "--n", "6000", "--j", "12", "--seed", &seed, "--out", &s(&csv)]), 0);
    (csv, dir.join(format!("{name}.schema")))
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, _) = simulate(dir.path(), "a", 42);
    let (b, _) = simulate(dir.path(), "b", 42);
    let (c, _) = simulate(dir.path(), "c", 43);
    assert_eq!(sha(&a), sha(&b));
    assert_ne!(sha(&a), sha(&c));
    assert!(dir.path().join("a.truth.json").exists());
    let truth = read_json(&dir.path().join("a.truth.json"));
    assert_eq!(truth["truth"]["seed"], 42);
    assert_eq!(truth["truth"]["coef_names"].as_array().unwrap().len(), 12);
}

#[test]
fn consults_scenario_writes_exposure_schema() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("c.csv");
    assert_eq!(run(&["simulate", "consults", "--n", "2000", "--j", "10", "--seed", "1", "--out", &s(&csv)]), 0);
    let schema = std::fs::read_to_string(dir.path().join("c.schema")).unwrap();
    assert!(schema.contains("years = exposure"));
    assert!(schema.contains("practice = cluster"));
}

#[test]
fn weighted_fit_reproduces_full_fit() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, schema) = simulate(dir.path(), "d", 5);
    let formula = itsa_formula();
    for method in ["full", "weighted"] {
        let out = dir.path().join(format!("{method}.json"));
        let code = run(&[
            "fit", "--input", &s(&csv), "--schema", &s(&schema), "--formula", &formula, "--method", method,
            "--output", &s(&out),
        ]);
        assert_eq!(code, 0);
    }
    let full = read_json(&dir.path().join("full.json"));
    let weighted = read_json(&dir.path().join("weighted.json"));
    let fb = full["beta"].as_array().unwrap();
    let wb = weighted["beta"].as_array().unwrap();
    for (f, w) in fb.iter().zip(wb) {
        assert!((f.as_f64().unwrap() - w.as_f64().unwrap()).abs() < 1e-6);
    }
    assert!((full["tau2"].as_f64().unwrap() - weighted["tau2"].as_f64().unwrap()).abs() < 1e-6);
    assert!(weighted["n_rows"].as_u64().unwrap() < full["n_rows"].as_u64().unwrap());
    assert_eq!(weighted["n_obs"], full["n_obs"]);
}

#[test]
fn compare_writes_long_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, schema) = simulate(dir.path(), "e", 9);
    let (out, json) = (dir.path().join("cmp.csv"), dir.path().join("cmp.json"));
    let code = run(&[
        "compare", "--input", &s(&csv), "--schema", &s(&schema), "--formula", &itsa_formula(),
        "--methods", "weighted,meta_mv,meta_fixed", "--repeats", "2", "--output", &s(&out), "--json", &s(&json),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&out).unwrap();
    // header plus 12 terms for each of three methods
    assert_eq!(text.lines().count(), 1 + 3 * 12);
    let report = read_json(&json);
    assert_eq!(report["repeats"], 2);
    assert_eq!(report["rows"][0]["runtimes"].as_array().unwrap().len(), 2);
}

#[test]
fn designs_counts_present_rows() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, schema) = simulate(dir.path(), "g", 2);
    let out = dir.path().join("designs.csv");
    assert_eq!(run(&["designs", "--schema", &s(&schema), "--input", &s(&csv), "--output", &s(&out)]), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 152);
    let total: usize = rows.iter().map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 6000);
}

#[test]
fn collapse_preserves_total_weight() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, schema) = simulate(dir.path(), "h", 3);
    let out = dir.path().join("collapsed.csv");
    assert_eq!(run(&["collapse", "--input", &s(&csv), "--schema", &s(&schema), "--output", &s(&out)]), 0);
    let mut reader = csv::Reader::from_path(&out).unwrap();
    let col = reader.headers().unwrap().iter().position(|h| h == "weight").unwrap();
    let total: u64 = reader.records().map(|r| r.unwrap()[col].parse::<u64>().unwrap()).sum();
    assert_eq!(total, 6000);
}

#[test]
fn exit_codes_by_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, schema) = simulate(dir.path(), "x", 1);
    let out = dir.path().join("fit.json");
    let fit = |extra: &[&str]| {
        let mut args = vec!["fit", "--input", csv.to_str().unwrap(), "--schema", schema.to_str().unwrap()];
        args.extend_from_slice(extra);
        args.extend_from_slice(&["--output", out.to_str().unwrap()]);
        run(&args)
    };
    assert_eq!(run(&["--help"]), 0);
    assert_eq!(run(&["bogus"]), 1);
    assert_eq!(fit(&["--method", "subsample"]), 1, "stochastic method without a seed");
    assert_eq!(fit(&["--method", "full", "--formula", "y ~ nosuch"]), 2);
    assert_eq!(run(&["fit", "--input", "/nonexistent.csv", "--schema", &s(&schema), "--method", "full", "--output", &s(&out)]), 2);
    // two copies of one column are perfectly collinear
    assert_eq!(fit(&["--method", "full", "--formula", "y ~ time + time:case + case:time"]), 3);
    assert!(!out.exists(), "failed commands must not leave output behind");
}

#[test]
fn binary_reports_exit_status() {
    let bin = env!("CARGO_BIN_EXE_tallglmm");
    let ok = Command::new(bin).arg("--version").output().unwrap();
    assert!(ok.status.success());
    let bad = Command::new(bin).args(["fit", "--method", "full"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let missing = Command::new(bin)
        .args(["designs", "--schema", &s(&dir.path().join("none.schema")), "--output", &s(&dir.path().join("o.csv"))])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&missing.stderr).is_empty());
}
