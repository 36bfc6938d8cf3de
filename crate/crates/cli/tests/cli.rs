use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn case(name: &str) -> String {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../cases")).join(name).display().to_string()
}

fn opf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opf")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn run_reports_taps_and_diagnostics() {
    let out = opf(&["run", "--case", &case("xfmr_k5.json"), "--json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(&out);
    assert_eq!(doc["status"], "optimal");
    assert_eq!(doc["taps"], serde_json::json!([1]));
    assert_eq!(doc["binaries"], 3);
    let losses = doc["losses_kw"].as_f64().unwrap();
    let oracle = doc["diagnostics"]["oracle_losses_kw"].as_f64().unwrap();
    assert!((losses - oracle).abs() <= 1e-3 * oracle);
    assert!(doc["diagnostics"]["max_bigm_gap"].as_f64().unwrap() <= 1e-6);
    assert_eq!(doc["flags"].as_array().unwrap().len(), 0);
    assert!(doc.get("wall_time_s").is_none());
}

#[test]
fn run_output_is_reproducible_without_timing() {
    let args = ["run", "--case", &case("case33.json"), "--dt", "0.02", "--json"];
    let (a, b) = (opf(&args), opf(&args));
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn fixed_and_approximate_modes() {
    let fixed = opf(&["run", "--case", &case("case33.json"), "--dt", "0.02", "--fixed", "1,2,2,1", "--json"]);
    assert_eq!(code(&fixed), 0);
    let doc = json(&fixed);
    assert_eq!(doc["mode"], "fixed");
    assert_eq!(doc["binaries"], 0);
    assert_eq!(doc["taps"], serde_json::json!([1, 2, 2, 1]));

    let approx = opf(&["run", "--case", &case("xfmr_k5.json"), "--approx", "--json"]);
    assert_eq!(code(&approx), 0);
    assert_eq!(json(&approx)["mode"], "approximate");
    let literal = opf(&["run", "--case", &case("xfmr_k5.json"), "--approx", "literal", "--json"]);
    assert_eq!(json(&literal)["mode"], "approximate-literal");

    let both = opf(&["run", "--case", &case("xfmr_k5.json"), "--approx", "--fixed", "1"]);
    assert_eq!(code(&both), 2);
}

#[test]
fn infeasible_box_exits_one_with_certificate() {
    let out = opf(&["run", "--case", &case("tight_box.json"), "--json"]);
    assert_eq!(code(&out), 1);
    let doc = json(&out);
    assert_eq!(doc["status"], "infeasible");
    assert!(!doc["certificate"].as_array().unwrap().is_empty());
}

#[test]
fn input_errors_exit_two() {
    assert_eq!(code(&opf(&["run", "--case", "/no/such/case.json"])), 2);
    assert_eq!(code(&opf(&["run", "--case", &case("case33.json"), "--dt", "0.03"])), 2);
    assert_eq!(code(&opf(&["pf", "--case", &case("xfmr_k5.json"), "--taps", "9"])), 2);
    assert_eq!(code(&opf(&["lin-audit", "--case", &case("xfmr_k5.json"), "--branch", "2-3"])), 2);
    assert_eq!(code(&opf(&["run"])), 2);
}

#[test]
fn pf_reports_flows_and_flags_bound_violations() {
    let ok = opf(&["pf", "--case", &case("xfmr_k5.json"), "--taps", "1", "--json"]);
    assert_eq!(code(&ok), 0);
    let doc = json(&ok);
    assert_eq!(doc["buses"].as_array().unwrap().len(), 4);
    assert_eq!(doc["branches"].as_array().unwrap().len(), 3);
    assert!((doc["losses_kw"].as_f64().unwrap() - 22.937132).abs() < 1e-5);

    let bad = opf(&["pf", "--case", &case("xfmr_k5.json"), "--taps", "5"]);
    assert_eq!(code(&bad), 1);
    assert!(String::from_utf8_lossy(&bad.stdout).contains("voltage bounds violated"));
}

#[test]
fn enumerate_lists_the_grid() {
    let out = opf(&["enumerate", "--case", &case("xfmr_k5.json"), "--json"]);
    assert_eq!(code(&out), 0);
    let doc = json(&out);
    assert_eq!(doc["points"], 6);
    assert_eq!(doc["best"]["taps"], serde_json::json!([1]));
    assert_eq!(doc["counts"]["feasible"], 1);

    let none = opf(&["enumerate", "--case", &case("tight_box.json")]);
    assert_eq!(code(&none), 1);
}

#[test]
fn lin_audit_and_dump_model() {
    let audit = opf(&["lin-audit", "--case", &case("xfmr_k5.json"), "--branch", "2-1"]);
    assert_eq!(code(&audit), 0);
    let text = String::from_utf8(audit.stdout).unwrap();
    assert!(text.starts_with("transformer 1-2"));
    assert_eq!(text.matches("binary").count(), 3);

    let dump = opf(&["dump-model", "--case", &case("two_bus.json")]);
    assert_eq!(code(&dump), 0);
    let text = String::from_utf8(dump.stdout).unwrap();
    assert!(text.starts_with("# tapflow model listing v1\n# variables 5 binaries 0 equalities 3 inequalities 0 cones 1\n"));
    assert!(text.contains("c0 cur[1-2]: v4 * v0 >= v2^2 + v3^2"));
}

#[test]
fn flags_take_precedence_over_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("opf.toml");
    std::fs::write(&cfg, "[solver]\nthreads = 0\nmode = \"ipm\"\n").unwrap();
    let cfg = cfg.display().to_string();
    let base = ["--config", cfg.as_str(), "run", "--case", &case("two_bus.json")];
    assert_eq!(code(&opf(&base)), 2);
    let mut overridden = base.to_vec();
    overridden.extend(["--threads", "1"]);
    assert_eq!(code(&opf(&overridden)), 0);

    std::fs::write(dir.path().join("bad.toml"), "[solver]\nunknown = 1\n").unwrap();
    let bad = dir.path().join("bad.toml").display().to_string();
    assert_eq!(code(&opf(&["--config", &bad, "run", "--case", &case("two_bus.json")])), 2);
}

#[test]
fn enumeration_cap_comes_from_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("opf.toml");
    std::fs::write(&cfg, "[enumeration]\ncap = 5\n").unwrap();
    let out = opf(&["--config", &cfg.display().to_string(), "enumerate", "--case", &case("xfmr_k5.json")]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("exceeds cap"));
}

#[test]
fn out_directory_receives_both_report_forms() {
    let dir = tempfile::tempdir().unwrap();
    let out = opf(&["run", "--case", &case("two_bus.json"), "--out", &dir.path().display().to_string()]);
    assert_eq!(code(&out), 0);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("solution.json")).unwrap()).unwrap();
    assert!((doc["losses_kw"].as_f64().unwrap() - 1.02062).abs() < 1e-4);
    let table = std::fs::read_to_string(dir.path().join("solution.txt")).unwrap();
    assert_eq!(table.as_bytes(), &out.stdout[..]);
}

#[test]
fn scenario_subset_writes_report_and_solutions() {
    let dir = tempfile::tempdir().unwrap();
    let out = opf(&[
        "scenarios",
        "--case",
        &case("case33.json"),
        "--only",
        "s3,s6-fixed",
        "--out",
        &dir.path().display().to_string(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1]["binaries"], 0);
    assert_eq!(rows[0]["taps"], rows[1]["taps"]);
    assert!(dir.path().join("s3.solution.json").exists());
    assert!(dir.path().join("s6-fixed.solution.json").exists());

    assert_eq!(code(&opf(&["scenarios", "--case", &case("case33.json"), "--only", "s9"])), 2);
}
