use std::io::Write;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

const WERNER_HALF: &str = r#"{"pauli":{"a":[0,0,0],"b":[0,0,0],"T":[[-0.5,0,0],[0,-0.5,0],[0,0,-0.5]]}}"#;
const RHO_C: &str = r#"{"pauli":{"a":[0,0,0],"b":[0,0,0],"T":[[0,0,0],[0,0,0],[0,0,1]]}}"#;
const WORKED: &str = r#"{"pauli":{"a":[0,0,0],"b":[0,0,0],"T":[[0.25,0,0],[0,-0.25,0],[0,0,0.75]]}}"#;
const NEAR_BOUNDARY: &str = r#"{"pauli":{"a":[0,0,0],"b":[0,0,0],"T":[[0.45,0,0],[0,0.3,0],[0,0,0.1]]}}"#;
const PURE_PRODUCT: &str = r#"{"pauli":{"a":[0,0,1],"b":[0,0,1],"T":[[0,0,0],[0,0,0],[0,0,1]]}}"#;
const PHI_PLUS: &str = r#"{"pauli":{"a":[0,0,0],"b":[0,0,0],"T":[[1,0,0],[0,-1,0],[0,0,1]]}}"#;

fn run_with(args: &[&str], stdin: &str, env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_steerlab"));
    cmd.args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .env_remove("STEERLAB_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let mut child = cmd.spawn().expect("binary runs");
    // the binary may exit before reading stdin
    let _ = child.stdin.take().unwrap().write_all(stdin.as_bytes());
    child.wait_with_output().unwrap()
}

fn run(args: &[&str], stdin: &str) -> Output {
    run_with(args, stdin, &[])
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn temp_file(name: &str, contents: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("steerlab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

#[test]
fn check_werner_is_certified() {
    let out = run(&["check", "-"], WERNER_HALF);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json(&out);
    assert!((v["report"]["max_value"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(v["report"]["verdict"], "CertifiedUnsteerable");
    assert_eq!(v["flags"]["grid_n"], 20000);
}

#[test]
fn check_from_file() {
    let path = temp_file("werner.json", WERNER_HALF);
    let out = run(&["check", path.to_str().unwrap()], "");
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn check_classically_correlated_violates() {
    let out = run(&["check", "-"], RHO_C);
    assert_eq!(code(&out), 1);
    let v = json(&out);
    assert!((v["report"]["max_value"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    let x: Vec<f64> = v["argmax_input_frame"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert!(x[0].abs() < 1e-6 && x[1].abs() < 1e-6 && (x[2].abs() - 1.0).abs() < 1e-6);
}

#[test]
fn check_inconclusive() {
    let out = run(&["check", "-", "--grid-n", "400"], NEAR_BOUNDARY);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["report"]["verdict"], "Inconclusive");
    assert!(v["report"]["max_value"].as_f64().unwrap() < 1.0);
    assert!(v["report"]["certified_upper_bound"].as_f64().unwrap() > 1.0);
    assert!(v["hint"].as_str().unwrap().contains("--grid-n"));
}

#[test]
fn check_trace_defect() {
    let mixed = r#"{"pauli":{"a":[0,0,0],"b":[0,0,0],"T":[[0,0,0],[0,0,0],[0,0,0]]}}"#;
    // trace 0.9
    let m = r#"{"matrix":[[[0.225,0],[0,0],[0,0],[0,0]],[[0,0],[0.225,0],[0,0],[0,0]],[[0,0],[0,0],[0.225,0],[0,0]],[[0,0],[0,0],[0,0],[0.225,0]]]}"#;
    assert_eq!(code(&run(&["check", "-"], mixed)), 0);
    let out = run(&["check", "-"], m);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("trace defect"), "{}", stderr(&out));
}

#[test]
fn check_malformed_json() {
    let out = run(&["check", "-"], "{\"matrix\": [1, 2");
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("malformed JSON"), "{}", stderr(&out));
}

#[test]
fn check_missing_file() {
    let out = run(&["check", "/nonexistent/state.json"], "");
    assert_eq!(code(&out), 3);
}

#[test]
fn check_rejects_tiny_grid() {
    let out = run(&["check", "-", "--grid-n", "10"], WERNER_HALF);
    assert_eq!(code(&out), 3);
}

#[test]
fn check_pure_bob_marginal() {
    let out = run(&["check", "-"], PURE_PRODUCT);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("Bob's marginal is pure"), "{}", stderr(&out));
}

#[test]
fn bad_thread_count() {
    let out = run_with(&["check", "-"], WERNER_HALF, &[("STEERLAB_THREADS", "zero")]);
    assert_eq!(code(&out), 3);
}

#[test]
fn simulate_werner_axes() {
    let out = run(&["simulate", "-", "--samples", "100000", "--seed", "5"], WERNER_HALF);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json(&out);
    let dirs = v["report"]["directions"].as_array().unwrap();
    assert_eq!(dirs.len(), 6);
    for d in dirs {
        assert!(d["empirical_dist"].as_f64().unwrap() <= 5.0 / 100_000f64.sqrt());
        assert!(d["analytic_dist"].as_f64().unwrap() <= 1e-10);
    }
    assert_eq!(v["flags"]["seed"], 5);
}

#[test]
fn simulate_is_byte_identical_across_thread_counts() {
    let args = ["simulate", "-", "--samples", "50000", "--fibonacci", "7", "--seed", "3"];
    let a = run_with(&args, WERNER_HALF, &[("STEERLAB_THREADS", "1")]);
    let b = run_with(&args, WERNER_HALF, &[("STEERLAB_THREADS", "4")]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn simulate_directions_file() {
    let dirs = temp_file("dirs.json", "[[1,1,0],[0,0,-2]]");
    let out = run(
        &[
            "simulate",
            "-",
            "--samples",
            "20000",
            "--directions-file",
            dirs.to_str().unwrap(),
        ],
        WERNER_HALF,
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json(&out);
    let d0 = v["report"]["directions"][0]["direction"].as_array().unwrap();
    assert!((d0[0].as_f64().unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
}

#[test]
fn simulate_rejects_few_samples() {
    let out = run(&["simulate", "-", "--samples", "10"], WERNER_HALF);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("1000"));
}

#[test]
fn simulate_requires_certificate_or_force() {
    let out = run(&["simulate", "-", "--samples", "2000"], RHO_C);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("--force"));
}

#[test]
fn simulate_forced_names_direction() {
    let out = run(&["simulate", "-", "--samples", "2000", "--force"], RHO_C);
    assert_eq!(code(&out), 4);
    let msg = stderr(&out);
    assert!(msg.contains("not reproducible"), "{msg}");
    assert!(msg.contains("0.000000, 1.000000)"), "{msg}");
}

#[test]
fn scan_family_to_stdout_and_file() {
    let out = run(
        &["scan-family", "--p-steps", "5", "--chi-steps", "4", "--grid-n", "500"],
        "",
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "p,chi,entangled,unsteerable_AB,steerable_BA,region_label,criterion_max,chsh_M"
    );
    assert_eq!(lines.len(), 21);

    let path = std::env::temp_dir().join(format!("steerlab-scan-{}.csv", std::process::id()));
    let out = run(
        &[
            "scan-family",
            "--p-steps",
            "5",
            "--chi-steps",
            "4",
            "--grid-n",
            "500",
            "--out",
            path.to_str().unwrap(),
        ],
        "",
    );
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["rows"], 20);
    assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
}

#[test]
fn threshold_value() {
    let out = run(&["threshold", "--tol", "1e-5"], "");
    assert_eq!(code(&out), 0);
    let p = json(&out)["threshold"].as_f64().unwrap();
    assert!((p - 0.83353).abs() <= 5e-5, "{p}");
}

#[test]
fn threshold_rejects_tiny_tolerance() {
    let out = run(&["threshold", "--tol", "1e-12"], "");
    assert_eq!(code(&out), 3);
}

#[test]
fn jm_exit_codes() {
    let out = run(&["jm", r#"{"family":"unsharp","eta":0.5}"#], "");
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["certified"], true);

    let out = run(&["jm", r#"{"family":"unsharp","eta":0.6}"#], "");
    assert_eq!(code(&out), 1);
    assert_eq!(json(&out)["certified"], false);

    let affine = r#"{"family":"affine","k0":1.0,"k1":[0,0,0.1],"eta":0.3,"v":[0,0,0]}"#;
    let out = run(&["jm", affine, "--grid-n", "300"], "");
    assert_eq!(code(&out), 2);
    assert_eq!(json(&out)["report"]["verdict"], "SampledOnly");

    let out = run(&["jm", "-"], r#"[{"k":1.0,"m":[0,0,0.4]}]"#);
    assert_eq!(code(&out), 0);

    let out = run(&["jm", r#"{"family":"unsharp"}"#], "");
    assert_eq!(code(&out), 3);
}

#[test]
fn strengthen_worked_example() {
    let out = run(&["strengthen", "-", "--seed", "4"], WORKED);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["verification"]["passed"], true);
    assert!((v["decomposition"]["p"].as_f64().unwrap() - 0.5).abs() < 1e-6);
    assert_eq!(v["decomposition"]["sigma"][0][0].as_array().unwrap().len(), 2);
}

#[test]
fn strengthen_phi_plus_finds_nothing() {
    let out = run(&["strengthen", "-", "--budget", "2000"], PHI_PLUS);
    assert_eq!(code(&out), 2);
    assert_eq!(json(&out)["found"], false);
}

#[test]
fn canonicalize_reports_diagonal() {
    let out = run(&["canonicalize", "-"], WORKED);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    let t: Vec<f64> = v["canonical"]["t"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    let mut mags: Vec<f64> = t.iter().map(|x| x.abs()).collect();
    mags.sort_by(f64::total_cmp);
    assert!((mags[0] - 0.25).abs() < 1e-12 && (mags[1] - 0.25).abs() < 1e-12 && (mags[2] - 0.75).abs() < 1e-12);
}
