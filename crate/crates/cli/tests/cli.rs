use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tangent(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tangent"))
        .args(args)
        .output()
        .expect("spawn tangent")
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
}

fn run_config(name: &str) -> Output {
    tangent(&["run", config(name).to_str().unwrap()])
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("report is JSON")
}

#[test]
fn zero_connection_ftf_exits_zero() {
    let out = run_config("zero_ftf.json");
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    assert_eq!(doc["status"], "pass");
    let laws = doc["checks"][0]["reports"][0]["laws"].as_array().unwrap();
    for prefix in ["(i) ", "(ii) ", "(iii) "] {
        assert!(laws
            .iter()
            .any(|l| l["law"].as_str().unwrap().starts_with(prefix) && l["status"] == "pass"));
    }
}

#[test]
fn torsion_connection_ftf_exits_one_with_witness() {
    let out = run_config("torsion_ftf.json");
    assert_eq!(out.status.code(), Some(1));
    let doc = json(&out);
    let laws = doc["checks"][0]["reports"][0]["laws"].as_array().unwrap();
    let failing: Vec<_> = laws.iter().filter(|l| l["status"] == "fail").collect();
    assert!(!failing.is_empty());
    for law in failing {
        let w = &law["witness"];
        assert!(w["input"].is_array() && w["lhs"].is_array() && w["rhs"].is_array());
    }
}

#[test]
fn bimonad_suite_is_exact() {
    let out = run_config("bimonad.json");
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    assert_eq!(doc["checks"][0]["max_residual"].as_f64(), Some(0.0));
}

#[test]
fn mixed_suite_reports_each_check() {
    let out = run_config("mixed.json");
    assert_eq!(out.status.code(), Some(1));
    let doc = json(&out);
    let status = |name: &str| {
        doc["checks"]
            .as_array()
            .unwrap()
            .iter()
            .find(|c| c["name"] == name)
            .map(|c| c["status"].as_str().unwrap().to_string())
            .unwrap()
    };
    assert_eq!(status("square-flat"), "fail");
    assert_eq!(status("exp-unit-to-flat"), "pass");
    assert_eq!(status("affine-flat"), "pass");
    assert_eq!(status("horizontal"), "pass");
    assert_eq!(status("self-morphism"), "pass");
    assert_eq!(status("axioms"), "pass");
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let cfg = config("mixed.json");
    for path in [&a, &b] {
        let out = tangent(&[
            "run",
            cfg.to_str().unwrap(),
            "--output",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(1));
        assert!(out.stdout.is_empty());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_json = dir.path().join("bad.json");
    std::fs::write(&bad_json, "{ not json").unwrap();
    assert_eq!(
        tangent(&["run", bad_json.to_str().unwrap()]).status.code(),
        Some(2)
    );

    let bad_expr = dir.path().join("expr.json");
    std::fs::write(
        &bad_expr,
        r#"{"dimension":1,"maps":{"f":{"expr":"x0+","in":1,"out":1}},"checks":[]}"#,
    )
    .unwrap();
    let out = tangent(&["run", bad_expr.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("position 3"));

    let missing = dir.path().join("missing.json");
    assert_eq!(
        tangent(&["run", missing.to_str().unwrap()]).status.code(),
        Some(2)
    );
}

#[test]
fn skipped_checks_keep_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("skip.json");
    std::fs::write(
        &path,
        r#"{"dimension":2,"christoffel":["0","1","0","0","0","0","0","0"],"checks":[{"name":"self-morphism"}],"samples":10}"#,
    )
    .unwrap();
    let out = tangent(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["checks"][0]["status"], "skipped");
}

#[test]
fn parse_echoes_canonical_form() {
    let out = tangent(&["parse", "x0^2", "--in", "1", "--out", "1"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "x0^2");

    let out = tangent(&["parse", "sin(x0)+x1", "--in", "2", "--out", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let printed = String::from_utf8_lossy(&out.stdout).trim().to_string();
    let again = tangent(&["parse", &printed, "--in", "2", "--out", "1"]);
    assert_eq!(String::from_utf8_lossy(&again.stdout).trim(), printed);
}

#[test]
fn parse_errors_report_position() {
    let out = tangent(&["parse", "x0+", "--in", "1", "--out", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("syntax error at position 3"), "{err}");

    let out = tangent(&["parse", "x2", "--in", "1", "--out", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pretty_report_renders_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let cfg = config("mixed.json");
    tangent(&["run", cfg.to_str().unwrap(), "-o", path.to_str().unwrap()]);
    let out = tangent(&["report", "--pretty", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("suite: FAIL"));
    assert!(text.contains("[FAIL] square-flat (morphism)"));
    assert!(text.contains("[PASS] exp-unit-to-flat (morphism)"));
}
