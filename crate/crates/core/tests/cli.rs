use std::path::PathBuf;
use std::process::Command;

use serde_json::Value;

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .display()
        .to_string()
}

fn mrt(args: &[&str], threads: &str) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_mrt"))
        .args(args)
        .env("MRT_THREADS", threads)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

#[test]
fn validate_collinear_fixture_passes() {
    let (code, out, _) = mrt(&["validate", &fixture("collinear.csv")], "2");
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert!(v["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["passed"] == Value::Bool(true)));
}

#[test]
fn circle_curve_matches_reference_length() {
    let reference: Value =
        serde_json::from_str(&std::fs::read_to_string(fixture("circle_depth6.json")).unwrap())
            .unwrap();
    let (code, out, _) = mrt(&["curve", &fixture("circle.csv"), "--depth", "6"], "2");
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    let got = v["length"]["dedup"].as_f64().unwrap();
    let want = reference["length_dedup"].as_f64().unwrap();
    assert!(
        (got - want).abs() <= reference["relative_tolerance"].as_f64().unwrap() * want,
        "{got} vs {want}"
    );
    assert_eq!(v["certificate"]["passed"], Value::Bool(true));
    assert!(v["segments"]
        .as_array()
        .unwrap()
        .iter()
        .all(|s| s["kind"] == "edge" || s["kind"] == "bridge"));
}

#[test]
fn single_atom_jones_is_zero() {
    let (code, out, _) = mrt(&["jones", &fixture("single.json")], "1");
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["reports"][0]["sum"].as_f64(), Some(0.0));
}

#[test]
fn bad_weight_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "0,0,1\n0.5,0.5,0\n").unwrap();
    let (code, _, err) = mrt(&["beta", path.to_str().unwrap()], "1");
    assert_eq!(code, 2);
    let v: Value = serde_json::from_str(&err).unwrap();
    assert!(v["error"]["message"].as_str().unwrap().contains("line 2"));
}

#[test]
fn out_of_range_parameter_is_rejected() {
    let (code, _, err) = mrt(&["jones", &fixture("single.json"), "--p", "0.5"], "1");
    assert_eq!(code, 2);
    assert!(err.contains("parameter"));
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    for args in [
        vec!["beta", "--variant", "star", "--k-max", "3"],
        vec!["tst", "--k-max", "4"],
        vec!["curve", "--depth", "5"],
    ] {
        let mut full: Vec<String> = args.iter().map(|s| s.to_string()).collect();
        full.insert(1, fixture("circle.csv"));
        let full: Vec<&str> = full.iter().map(|s| s.as_str()).collect();
        let (c1, one, _) = mrt(&full, "1");
        let (c8, eight, _) = mrt(&full, "8");
        assert_eq!((c1, c8), (0, 0));
        assert_eq!(one, eight, "{args:?}");
    }
}

#[test]
fn output_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let (code, out, _) = mrt(
        &[
            "tst",
            &fixture("collinear.csv"),
            "-o",
            path.to_str().unwrap(),
        ],
        "1",
    );
    assert_eq!(code, 0);
    assert!(out.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert!(v["set_sum"]["total"].as_f64().unwrap() < 1e-20);
}
