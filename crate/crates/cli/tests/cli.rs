use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn cnot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cnot")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn solve(dir: &Path, args: &[&str]) -> Output {
    let mut all = vec!["solve", "--out", path(dir)];
    all.extend_from_slice(args);
    cnot(&all)
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// `(header, rows)` of a CSV file, rows split on commas.
fn csv(file: &Path) -> (String, Vec<Vec<String>>) {
    let text = fs::read_to_string(file).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    (header, lines.map(|l| l.split(',').map(str::to_string).collect()).collect())
}

#[test]
fn null_cost_ode_gives_a_uniform_density() {
    let tmp = TempDir::new().unwrap();
    let out = solve(tmp.path(), &["--scenario", "trivial_uniform", "--solver", "ode"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, rows) = csv(&tmp.path().join("measure.csv"));
    assert_eq!(header, "x,weight,density");
    assert!(!rows.is_empty());
    for r in rows {
        let density: f64 = r[2].parse().unwrap();
        assert!((density - 1.0).abs() <= 1e-3, "{r:?}");
    }
    let m = manifest(tmp.path());
    assert_eq!(m["converged"], true);
    assert!((m["ode_constant"].as_f64().unwrap() - 1.0).abs() <= 1e-6);
}

#[test]
fn manifest_lists_every_file_and_reruns_are_identical() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let args = ["--scenario", "fig3", "--grid", "8", "--solver", "best-reply", "--init", "random", "--dump-transport"];
    assert_eq!(code(&solve(&a, &args)), 0);
    assert_eq!(code(&solve(&b, &args)), 0);

    let listed: Vec<String> =
        manifest(&a)["files"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    let mut present: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    present.sort();
    let mut sorted = listed.clone();
    sorted.sort();
    assert_eq!(sorted, present);
    for name in &listed {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name} differs");
    }
    let (header, _) = csv(&a.join("measure.csv"));
    assert_eq!(header, "x,y,weight,density");
    assert_eq!(csv(&a.join("trace.csv")).0, "iteration,successive_W1,objective,defect");
    assert_eq!(csv(&a.join("plan.csv")).0, "type_node,strategy_node,mass");
    assert_eq!(csv(&a.join("duals.csv")).0, "side,node,potential");
}

#[test]
fn ode_on_a_two_dimensional_scenario_is_an_input_error() {
    let tmp = TempDir::new().unwrap();
    let out = solve(tmp.path(), &["--scenario", "fig3", "--solver", "ode"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("ode requires 1D"), "{}", stderr(&out));
}

#[test]
fn input_errors_exit_with_one() {
    let tmp = TempDir::new().unwrap();
    let out = solve(tmp.path(), &["--scenario", "no_such_scenario", "--solver", "ode"]);
    assert_eq!(code(&out), 1);
    let out = solve(tmp.path(), &["--scenario", "fig2", "--solver", "simulated-annealing"]);
    assert_eq!(code(&out), 1);
    let out = solve(tmp.path(), &["--scenario", "fig1_alpha2", "--solver", "variational"]);
    assert_eq!(code(&out), 1);

    let broken = tmp.path().join("broken.json");
    fs::write(&broken, r#"{"schema_version": 1, "name": "x"}"#).unwrap();
    let out = solve(&tmp.path().join("o"), &["--scenario", path(&broken), "--solver", "ode"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("grid"), "{}", stderr(&out));

    let threads = Command::new(env!("CARGO_BIN_EXE_cnot"))
        .args(["distance", "--a", "x", "--b", "y"])
        .env("CNOT_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&threads), 1);
}

#[test]
fn iteration_cap_exits_with_two_and_still_writes_outputs() {
    let tmp = TempDir::new().unwrap();
    let out = solve(
        tmp.path(),
        &["--scenario", "log_benchmark", "--grid", "32", "--solver", "best-reply", "--max-iter", "3"],
    );
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(tmp.path().join("measure.csv").exists());
    let m = manifest(tmp.path());
    assert_eq!(m["converged"], false);
    assert_eq!(m["iterations"], 3);
}

#[test]
fn verify_accepts_a_converged_run_and_rejects_a_tampered_one() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&solve(tmp.path(), &["--scenario", "log_benchmark", "--grid", "64", "--solver", "ode"])), 0);
    let out = cnot(&["verify", "--run", path(tmp.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["verified"], true);
    assert!(summary["relative_defect"].as_f64().unwrap() <= 1e-3);

    let scenario = tmp.path().join("scenario.json");
    let text = fs::read_to_string(&scenario).unwrap().replace("\"log_benchmark\"", "\"renamed\"");
    fs::write(&scenario, text).unwrap();
    let out = cnot(&["verify", "--run", path(tmp.path())]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("hash"), "{}", stderr(&out));
}

#[test]
fn compare_against_itself_is_zero_and_mismatched_scenarios_fail() {
    let tmp = TempDir::new().unwrap();
    let (ode, var, other) = (tmp.path().join("ode"), tmp.path().join("var"), tmp.path().join("other"));
    assert_eq!(code(&solve(&ode, &["--scenario", "trivial_uniform", "--grid", "64", "--solver", "ode"])), 0);
    assert_eq!(code(&solve(&var, &["--scenario", "trivial_uniform", "--grid", "64", "--solver", "variational"])), 0);
    assert_eq!(code(&solve(&other, &["--scenario", "trivial_uniform", "--grid", "32", "--solver", "ode"])), 0);

    let out_dir = tmp.path().join("cmp");
    let out = cnot(&["compare", "--runs", path(&ode), path(&ode), path(&var), "--out", path(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (_, rows) = csv(&out_dir.join("w1_matrix.csv"));
    assert_eq!(rows.len(), 3);
    let value = |r: usize, c: usize| rows[r][c + 1].parse::<f64>().unwrap();
    assert_eq!(value(0, 1), 0.0);
    assert_eq!(value(1, 0), 0.0);
    for k in 0..3 {
        assert_eq!(value(k, k), 0.0);
    }
    assert!(value(0, 2) <= 1e-3);
    assert_eq!(manifest(&out_dir)["files"][0], "w1_matrix.csv");

    let out = cnot(&["compare", "--runs", path(&ode), path(&other), "--out", path(&tmp.path().join("bad"))]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("scenario hash mismatch"), "{}", stderr(&out));
}

#[test]
fn distance_between_measure_files() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a.csv");
    let b = tmp.path().join("b.csv");
    fs::write(&a, "x,y,weight\n0,0,0.5\n1,0,0.5\n").unwrap();
    fs::write(&b, "x,y,weight\n0,1,0.5\n1,1,0.5\n").unwrap();
    let value = |metric: &str, a: &Path, b: &Path| {
        let out = cnot(&["distance", "--a", path(a), "--b", path(b), "--metric", metric]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        String::from_utf8(out.stdout).unwrap().trim().parse::<f64>().unwrap()
    };
    assert!((value("w1", &a, &b) - 1.0).abs() < 1e-12);
    assert!((value("quotient", &a, &b) - 1.0).abs() < 1e-12);
    // c = |θ − x|²/2 moves each atom one unit
    assert!((value("wc", &a, &b) - 0.5).abs() < 1e-12);
    assert_eq!(value("w1", &a, &a), 0.0);

    let lopsided = tmp.path().join("c.csv");
    fs::write(&lopsided, "x,y,weight\n0,0,0.2\n1,0,0.8\n").unwrap();
    let out = cnot(&["distance", "--a", path(&a), "--b", path(&lopsided), "--metric", "quotient"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn converge_n_writes_the_experiment_table() {
    let tmp = TempDir::new().unwrap();
    let out = cnot(&[
        "converge-n", "--scenario", "fig3", "--grid", "8", "--n-list", "5,20", "--seeds", "2", "--out",
        path(tmp.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, rows) = csv(&tmp.path().join("experiment.csv"));
    assert_eq!(header, "N,seed,pure_nash_found,W1_to_ref,gamma_defect,epsilon_N,sweeps_used");
    assert_eq!(rows.len(), 4);
    let m = manifest(tmp.path());
    assert_eq!(m["kind"], "converge-n");
    assert_eq!(m["seeds"], serde_json::json!([1, 2]));
    assert!(tmp.path().join("reference.csv").exists());
}
