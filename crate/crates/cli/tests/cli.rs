//! End-to-end runs of the `contactlin` binary: exit codes, schema validity,
//! reproducibility.

use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

const ALPHA_Q2: &str = "alpha*q^2/p";
const QUARTIC: &str = "-x*p^4*q^3 + u*p^3*q^3";

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_contactlin")).args(args).output().expect("spawn contactlin")
}

fn json(args: &[&str]) -> (i32, Value, Vec<u8>) {
    let mut full = vec!["--format", "json"];
    full.extend_from_slice(args);
    let out = run(&full);
    let v: Value = serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{args:?}: {e}\n{}", String::from_utf8_lossy(&out.stdout)));
    assert_schema(&v);
    (out.status.code().unwrap(), v, out.stdout)
}

fn assert_schema(v: &Value) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../schemas/report.schema.json");
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(v).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{errors:#?}\n{v:#}");
}

#[test]
fn classify_exit_codes() {
    let (code, v, _) = json(&["classify", ALPHA_Q2]);
    assert_eq!(code, 0);
    assert_eq!(v["outcome"], "FiveSymmetryLinearizable");
    assert!(v["s"].is_string());

    let (code, v, _) = json(&["classify", QUARTIC]);
    assert_eq!(code, 0);
    assert_eq!(v["outcome"], "FourSymmetryLinearizable");

    let (code, v, _) = json(&["classify", "u^2"]);
    assert_eq!(code, 4);
    assert_eq!(v["first_failing"], "I11");
    assert_eq!(v["witness"]["mode"], "exact");

    let (code, v, _) = json(&["classify", "0"]);
    assert_eq!(code, 3);
    assert_eq!(v["outcome"], "WuenschmannZero");
}

#[test]
fn invariants_report() {
    let (code, v, _) = json(&["invariants", "s*p + u"]);
    assert_eq!(code, 0);
    let k = v["invariants"].as_array().unwrap().iter().find(|e| e["name"] == "K").unwrap();
    assert_eq!(k["value"], "s");
    assert!(v["side_condition"].as_str().unwrap().starts_with("J^3 = "));

    let out = run(&["invariants", "0"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("I3 vanishes identically"));
}

#[test]
fn usage_errors_exit_two() {
    let (code, v, _) = json(&["classify", "u^^2"]);
    assert_eq!(code, 2);
    assert!(v["error"].as_str().unwrap().contains("parse"));
    assert_eq!(run(&["classify", "u", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["classify", "beta*u", "--param", "beta"]).status.code(), Some(2));
    let (code, _, _) = json(&["classify", "--fixture", "no_such_fixture"]);
    assert_eq!(code, 2);
}

#[test]
fn verify_fixtures() {
    let (code, v, _) = json(&["verify", "--fixture", "quartic_p_cubic_q"]);
    assert_eq!(code, 0);
    assert_eq!(v["passed"], true);
    assert_eq!(v["prolongation"]["eta"], "-1/q");
    let systems = v["systems"].as_array().unwrap();
    assert_eq!(systems.len(), 19);
    assert!(systems.iter().all(|r| r["verdict"]["zero"] == true));

    let (code, v, _) = json(&["verify", "--fixture", "alpha_q2_over_p"]);
    assert_eq!(code, 0);
    assert_eq!(v["mode"], "float");
    assert_eq!(v["systems"].as_array().unwrap().len(), 17);
}

#[test]
fn verify_detects_wrong_chi() {
    let (code, v, _) = json(&["verify", "--fixture", "quartic_p_cubic_q", "--chi", "x"]);
    assert_eq!(code, 5);
    assert_eq!(v["passed"], false);
    assert_eq!(v["contact"]["passed"], false);
}

#[test]
fn synthesize_needs_h_and_b_on_four_symmetry_inputs() {
    let (code, v, _) = json(&["synthesize", QUARTIC, "--base", "0,1,2"]);
    assert_eq!(code, 2);
    assert!(v["error"].as_str().unwrap().contains("--H"));
}

#[test]
fn synthesize_fixture_json_and_csv() {
    let dir = std::env::temp_dir().join(format!("contactlin-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let csv = dir.join("grid.csv");
    let (code, v, _) =
        json(&["synthesize", "--fixture", "quartic_p_cubic_q", "--grid", "3", "--csv", csv.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(v["nodes"].as_array().unwrap().len(), 27);
    assert!(v["fit"]["max_error"]["phi"].as_f64().unwrap() < 1e-8);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# gauge"));
    assert_eq!(lines.next().unwrap(), "x,u,p,a1,phi,eta,chi,psi");
    assert_eq!(lines.count(), 27);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn same_seed_gives_identical_json() {
    for args in [
        &["classify", ALPHA_Q2][..],
        &["classify", "u^2", "--seed", "7"],
        &["invariants", QUARTIC],
        &["verify", "--fixture", "alpha_q2_over_p"],
        &["synthesize", "--fixture", "alpha_q2_over_p", "--grid", "3", "--jobs", "2"],
    ] {
        let (_, _, a) = json(args);
        let (_, _, b) = json(args);
        assert_eq!(a, b, "{args:?}");
    }
}

#[test]
fn output_flag_writes_file() {
    let path = std::env::temp_dir().join(format!("contactlin-out-{}.json", std::process::id()));
    let out = run(&["--format", "json", "--output", path.to_str().unwrap(), "classify", "x^3*u"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_schema(&v);
    assert_eq!(v["K"], "-3/x^4");
    std::fs::remove_file(&path).ok();
}
