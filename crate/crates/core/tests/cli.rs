mod common;

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn tangentia(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tangentia"))
        .args(args)
        .env("TANGENTIA_THREADS", "2")
        .output()
        .expect("binary runs")
}

/// Parses CSV written by the driver, skipping the leading `#` config line.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# {"));
    let body: String = lines.map(|l| format!("{l}\n")).collect();
    let mut r = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(body.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn maximal_field_of_the_tent() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mf.csv");
    let o = tangentia(&[
        "maximal-field",
        "--function",
        "tent",
        "--lambda",
        "0",
        "--box",
        "-3,3",
        "--res",
        "512",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out);
    assert_eq!(&header[..3], ["x1", "Mf", "r_best_count"]);
    assert_eq!(rows.len(), 512);
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap()))
        .collect();
    // every node near x = 2 matches the brute-force oracle
    for &(x, v) in pts.iter().filter(|p| (p.0 - 2.0).abs() < 0.05) {
        assert!(
            (v - common::brute_maximal(x, 0.0).0).abs() < 1e-6,
            "x={x} Mf={v}"
        );
    }
    // x = 2 falls between nodes; quadratic interpolation of the field recovers it
    let i = pts.iter().position(|p| p.0 > 2.0).unwrap();
    let [(x0, y0), (x1, y1), (x2, y2)] = [pts[i - 1], pts[i], pts[i + 1]];
    let l = |a: f64, b: f64, c: f64| (2.0 - b) * (2.0 - c) / ((a - b) * (a - c));
    let at2 = y0 * l(x0, x1, x2) + y1 * l(x1, x0, x2) + y2 * l(x2, x0, x1);
    assert!((at2 - (3.0 - 7f64.sqrt()) / 2.0).abs() < 1e-6, "{at2}");
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.csv");
    let run = || {
        let o = tangentia(&[
            "singular-set",
            "--function",
            "maxaffine[(1,0,0),(-1,0,0)]",
            "--box",
            "-1,1,-1,1",
            "--res",
            "24",
            "--seed",
            "5",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(&p).unwrap()
    };
    let (a, b) = (run(), run());
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn envelope_suite_exits_zero() {
    let o = tangentia(&["verify", "--suite", "envelope", "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["config"]["command"], "verify");
}

#[test]
fn tangency_report_for_a_circle() {
    let dir = tempfile::tempdir().unwrap();
    let pts = dir.path().join("circle.csv");
    let mut text = String::from("x1,x2\n");
    for i in 0..400 {
        let t = std::f64::consts::TAU * i as f64 / 400.0;
        text += &format!("{},{}\n", t.cos(), t.sin());
    }
    std::fs::write(&pts, text).unwrap();
    let o = tangentia(&["tangency", "--points", pts.to_str().unwrap(), "--k", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let reports = v["result"].as_array().expect("report array");
    assert!(!reports.is_empty());
    let tangential = reports
        .iter()
        .filter(|r| r["verdict"] == "tangential")
        .count();
    assert!(
        tangential * 10 >= reports.len() * 9,
        "{tangential}/{}",
        reports.len()
    );
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"command": "dirderiv", "point": [0.5], "theta": [-1.0]}"#,
    )
    .unwrap();
    let o = tangentia(&[
        "dirderiv",
        "--function",
        "tent",
        "--point",
        "-0.5",
        "--theta",
        "1",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["config"]["point"][0], 0.5);
    // tent at 0.5 moving left climbs with slope 1
    assert!((v["result"]["value"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn bad_input_exits_two() {
    assert_eq!(
        tangentia(&["tau", "--function", "nosuch", "--point", "0"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(tangentia(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(tangentia(&["--help"]).status.code(), Some(0));
}
