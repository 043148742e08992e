use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;

use lplab_harness::{find, run_experiment, ExperimentConfig, Overrides};
use serde_json::Value;

fn lab(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_lab")).args(args).arg("--out").arg(out).env_remove("LAB_OUT_DIR").output().unwrap()
}

fn config(name: &str, sets: &[&str], out: &Path) -> ExperimentConfig {
    let exp = find(name).unwrap();
    let ov = Overrides { sets: sets.iter().map(|s| s.to_string()).collect(), out: Some(out.into()), ..Overrides::default() };
    ExperimentConfig::resolve(exp.name, &exp.params(), &ov).unwrap()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| l.split(',').map(String::from).collect()).collect()
}

fn column(rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let i = rows[0].iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows[1..].iter().map(|r| r[i].parse().unwrap()).collect()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for (name, args) in [("remark33", vec!["--set", "h=0.0625", "--paths", "500", "--dt", "0.002"]), ("occupation", vec!["--paths", "300", "--per-path"])] {
        let (a, b) = (dir.path().join(format!("{name}-a")), dir.path().join(format!("{name}-b")));
        let mut full = vec![name];
        full.extend(&args);
        assert!(lab(&full, &a).status.success());
        assert!(lab(&full, &b).status.success());
        let files = json(&a.join("manifest.json"))["files"].as_array().unwrap().clone();
        assert!(!files.is_empty());
        for f in files.iter().map(|f| f.as_str().unwrap()).chain(["manifest.json"]) {
            assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{name}/{f}");
        }
    }
}

#[test]
fn manifest_lists_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let manifest = run_experiment(&config("occupation", &["paths=200", "per_path=true"], &out)).unwrap();
    let on_disk: BTreeSet<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|f| f != "manifest.json")
        .collect();
    assert_eq!(on_disk, manifest.files.iter().cloned().collect::<BTreeSet<_>>());
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(m["config"]["params"]["paths"], 200);
    assert_eq!(m["config"]["params"]["example"], "remark33");
}

#[test]
fn unknown_keys_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"experiment": "exact-tables", "params": {}, "colour": "red"}"#).unwrap();
    let o = lab(&["exact-tables", "--config", cfg.to_str().unwrap()], &dir.path().join("a"));
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(&cfg, r#"{"params": {"epsilon": [0.5]}}"#).unwrap();
    let o = lab(&["exact-tables", "--config", cfg.to_str().unwrap()], &dir.path().join("b"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("epsilon"));
    assert_eq!(lab(&["no-such-experiment"], dir.path()).status.code(), Some(2));
    assert_eq!(lab(&["dichotomy", "--set", "branch=sideways"], dir.path()).status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(lab(&["exact-tables"], &dir.path().join("ok")).status.code(), Some(0));
    // Invalid physics parameter: eps outside (0, 1).
    assert_eq!(lab(&["remark33", "--set", "eps=1.5"], &dir.path().join("v")).status.code(), Some(2));
    // K = 0 with mu_theta identically 0 makes lambda(mu) unbounded.
    let o = lab(&["mu-theta", "--set", "profile=constant", "--M", "0", "--cap-K", "0"], &dir.path().join("n"));
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn single_level_sweep_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(lab(&["convergence", "--levels", "0.1"], dir.path()).status.code(), Some(2));
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    let out = dir.path().join("from-config");
    std::fs::write(&cfg, format!(r#"{{"seed": 9, "out": {:?}, "params": {{"eps": [0.5], "r": [0.25], "m": [3]}}}}"#, out)).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lab"))
        .args(["exact", "--config", cfg.to_str().unwrap(), "--set", "mu_grid=1,4"])
        .env_remove("LAB_OUT_DIR")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["config"]["seed"], 9);
    assert_eq!(m["config"]["params"]["mu_grid"], serde_json::json!([1.0, 4.0]));
    let rows = read_csv(&out.join("sign_drift.csv"));
    assert_eq!(rows.len(), 3);
    assert_eq!(column(&rows, "inv_nu2")[1], 1.0);
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lab")).arg("exact").env("LAB_OUT_DIR", dir.path()).output().unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn remark33_closed_form_and_fd() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&config("remark33-exit", &[], dir.path())).unwrap();
    let rows = read_csv(&dir.path().join("remark33_exit.csv"));
    let closed = column(&rows, "closed_form")[0];
    assert_eq!(rows[1][rows[0].iter().position(|h| h == "closed_form").unwrap()], "1.38888888889e-2");
    let fd = column(&rows, "fd_value")[0];
    assert!((fd - closed).abs() / closed < 0.02, "fd {fd}");
}

#[test]
fn identity_on_linear_function_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&config("identity-22", &["function=\"x1\"", "operator=\"laplace\""], dir.path())).unwrap();
    let rows = read_csv(&dir.path().join("identity.csv"));
    assert!(column(&rows, "residual").iter().all(|&r| r == 0.0));
}

#[test]
fn dichotomy_mu_ratio_tends_to_one() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&config("dichotomy", &["mu_grid=[1, 10, 100]"], dir.path())).unwrap();
    let rows = read_csv(&dir.path().join("dichotomy.csv"));
    assert_eq!(rows[0], ["mu", "norm_u", "norm_f", "mu_ratio", "mu2_ratio"]);
    let r = column(&rows, "mu_ratio");
    assert!(r[0] > r[1] && r[1] > r[2] && r[2] < 1.4 && r[2] > 1.0, "{r:?}");
    let summary = json(&dir.path().join("dichotomy.json"));
    assert_eq!(summary["report"]["threshold"], 36.0);
}

#[test]
fn elliptic_sweep_is_second_order_and_mc_sweep_consistent() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&config("convergence", &[], &dir.path().join("e"))).unwrap();
    let s = json(&dir.path().join("e/sweep.json"));
    let order = s["table"]["quantities"][0]["order"].as_f64().unwrap();
    assert!((order - 2.0).abs() < 0.2, "{order}");
    run_experiment(&config("convergence", &["quantity=mc-exit", "paths=4000"], &dir.path().join("m"))).unwrap();
    let s = json(&dir.path().join("m/sweep.json"));
    assert_eq!(s["non_convergent"], serde_json::json!([]));
}

#[test]
fn suite_bounds_are_stable_for_one_pair() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&config("hessian", &["pair=checkerboard-2d-const"], dir.path())).unwrap();
    let s = json(&dir.path().join("summary.json"));
    assert_eq!(s["pairs"][0]["stable"], true);
    let err = run_experiment(&config("gradient", &["pair=nonexistent"], &dir.path().join("x"))).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn bellman_comparison_holds() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&config("bellman", &["operators=5"], dir.path())).unwrap();
    let rows = read_csv(&dir.path().join("margins.csv"));
    assert!(column(&rows, "holds").iter().all(|&h| h == 1.0));
    assert_eq!(json(&dir.path().join("summary.json"))["nonnegative"], true);
}
