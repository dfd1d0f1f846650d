use std::process::{Command, Output};

use efms::specfile::{bundled, CoefficientRecord};
use efms::{integrate, problems, solve_ef_coefficients};
use serde_json::Value;

fn efms(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_efms")).args(args).output().unwrap()
}

fn efms_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_efms")).args(args).env(key, value).output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn csv_rows(bytes: &[u8]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::Reader::from_reader(bytes);
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-15 * a.abs().max(b.abs())
}

#[test]
fn theorem2_passes_for_the_fitted_two_step_method() {
    let out = efms(&["verify-theorem2", "--spec", "two_step_k3p0"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["max_deviation"].as_f64().unwrap() < 0.02);
    assert_eq!(v["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn order_of_simos() {
    let v = json(&efms(&["order", "--spec", "simos_case2_classical"]));
    assert_eq!(v["p"], 6);
    assert_eq!(v["C_exact"], "-53/20160");
    assert!((v["C"].as_f64().unwrap() + 0.00262897).abs() < 1e-8);
}

#[test]
fn phaselag_of_simos() {
    let out = efms(&["phaselag", "--spec", "simos_case2_classical", "--r", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["c_closed"].as_f64().unwrap() / (53.0 / 120960.0) - 1.0).abs() < 1e-14);
    assert_eq!(v["c_closed_at_r0_exact"], "53/120960");
    assert_eq!(v["q"], 6);
    let v = json(&efms(&["phaselag", "--spec", "simos_case2_classical", "--tuning-level", "3", "--r", "0"]));
    assert_eq!(v["tuning_level"], 3);
}

#[test]
fn missing_spec_exits_two() {
    let out = efms(&["coeffs", "--spec", "/nonexistent/method.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "not_found");
}

#[test]
fn parse_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "J = 2\nK = \n").unwrap();
    let out = efms(&["coeffs", "--spec", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "parse");

    let out = efms(&["coeffs", "--spec", "numerov", "--unknown-flag"]);
    assert_eq!(out.status.code(), Some(3));
    let out = efms(&["integrate", "--spec", "numerov", "--problem", "harmonic", "--h", "-1", "--steps", "10"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["exit_code"], 3);
}

#[test]
fn tolerance_violations_exit_four() {
    let out = efms_env(&["verify-theorem2", "--spec", "two_step_k1p1"], "EFMS_TOL_THEOREM2", "1e-15");
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(json(&out)["passed"], false);
    assert_eq!(stderr_json(&out)["error"], "tolerance");
    let out = efms_env(&["phaselag", "--spec", "numerov"], "EFMS_TOL_PHASELAG", "1e-15");
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn spec_files_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("custom.toml");
    std::fs::write(&path, "label = \"custom\"\nJ = 4\nK = 3\nP = 1\nfrozen = { a0 = \"-1/2\" }\n").unwrap();
    let out = efms(&["validate", "--spec", path.to_str().unwrap(), "--theta", "0.3"]);
    assert!(out.status.code().is_some());
    assert_eq!(json(&out)["label"], "custom");
}

#[test]
fn coefficient_json_and_csv_round_trip() {
    let spec = bundled("two_step_k1p1").unwrap();
    let cs = solve_ef_coefficients::<f64>(&spec, 0.8).unwrap();

    let out = efms(&["coeffs", "--spec", "two_step_k1p1", "--theta", "0.8"]);
    let record = CoefficientRecord::from_json(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(record.to_set().unwrap(), cs);

    let out = efms(&["coeffs", "--spec", "two_step_k1p1", "--theta", "0.8", "--format", "csv"]);
    let (header, rows) = csv_rows(&out.stdout);
    assert_eq!(header, ["J", "theta", "a0", "a1", "b0", "b1"]);
    let values: Vec<f64> = rows[0][2..].iter().map(|v| v.parse().unwrap()).collect();
    for (got, want) in values.iter().zip(cs.a.iter().chain(&cs.b)) {
        assert!(close(*got, *want), "{got} vs {want}");
    }
}

#[test]
fn trajectory_csv_round_trip_through_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.csv");
    let out = efms(&[
        "integrate", "--spec", "numerov", "--problem", "kepler", "--h", "0.05", "--steps", "200", "--format", "csv",
        "--output", path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let (header, rows) = csv_rows(&std::fs::read(&path).unwrap());
    assert_eq!(header, ["x", "y0", "y1", "err0", "err1"]);

    let cs = solve_ef_coefficients::<f64>(&bundled("numerov").unwrap(), 0.0).unwrap();
    let traj = integrate(&cs, &problems::kepler_circular::<f64>().problem, 0.05, 200).unwrap();
    assert_eq!(rows.len(), traj.ys.len());
    for (row, (x, y)) in rows.iter().zip(traj.xs.iter().zip(&traj.ys)) {
        let parsed: Vec<f64> = row.iter().map(|v| v.parse().unwrap()).collect();
        assert!(close(parsed[0], *x));
        assert!(close(parsed[1], y[0]) && close(parsed[2], y[1]));
    }
}

#[test]
fn integrate_summary() {
    let v = json(&efms(&[
        "integrate", "--spec", "two_step_k3p0", "--problem", "harmonic", "--omega", "2", "--h", "0.05", "--steps", "1000",
        "--k", "2",
    ]));
    assert!(v["max_error"].as_f64().unwrap() < 1e-11);
    assert!(v["drift"]["amplitude_corrected"].as_f64().unwrap() < 1e-10);
    assert!(v["iterations"]["max"].as_u64().unwrap() <= 4);

    let v = json(&efms(&["integrate", "--spec", "stormer", "--problem", "harmonic", "--h", "0.1", "--steps", "100"]));
    assert_eq!(v["f_evals"], 99);
    assert_eq!(v["iterations"]["max"], 0);

    let out = efms(&["integrate", "--spec", "numerov", "--problem", "pendulum", "--h", "0.1", "--steps", "10"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stability_scan_is_independent_of_thread_count() {
    let args = |threads: &'static str| {
        vec!["stability", "--spec", "two_step_k1p1", "--n", "15", "--format", "csv", "--threads", threads]
    };
    let one = efms(&args("1"));
    let four = efms(&args("4"));
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, four.stdout);
    let (header, rows) = csv_rows(&one.stdout);
    assert_eq!(header, ["nu", "theta", "periodic"]);
    assert_eq!(rows.len(), 15 * 15);
}

#[test]
fn problem_listing() {
    let v = json(&efms(&["problems", "--list"]));
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|e| e["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["harmonic", "inhomogeneous", "kepler"]);
}

#[test]
fn every_subcommand_documents_its_knobs() {
    let cases: [(&str, &[&str]); 8] = [
        ("coeffs", &["--spec", "--theta", "[default: 0]"]),
        ("validate", &["--spec", "--theta"]),
        ("order", &["--spec"]),
        ("phaselag", &["--spec", "--r", "--tol", "EFMS_TOL_PHASELAG", "[default: 0.01]", "--tuning-level"]),
        ("stability", &["--nu-max", "--r-max", "--n", "[default: 41]"]),
        ("integrate", &["--problem", "--h", "--steps", "--k", "--omega"]),
        ("verify-theorem2", &["--r", "--tol", "EFMS_TOL_THEOREM2", "[default: 0.02]"]),
        ("problems", &["--list"]),
    ];
    for (cmd, knobs) in cases {
        let out = efms(&[cmd, "--help"]);
        assert_eq!(out.status.code(), Some(0));
        let text = String::from_utf8(out.stdout).unwrap();
        for knob in knobs.iter().chain(&["--output", "--format", "--threads", "--precision"]) {
            assert!(text.contains(knob), "{cmd} --help lacks {knob}");
        }
    }
}
