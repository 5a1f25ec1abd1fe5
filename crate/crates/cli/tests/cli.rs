use std::collections::BTreeMap;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opo-comb"))
        .args(args)
        .env_remove("OPO_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&stdout(&run(args))).unwrap()
}

/// Data rows of a CSV document as column-name maps, comments skipped.
fn csv_rows(text: &str) -> Vec<BTreeMap<String, String>> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    lines
        .map(|l| {
            header
                .iter()
                .cloned()
                .zip(l.split(',').map(String::from))
                .collect()
        })
        .collect()
}

fn field(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap()
}

#[test]
fn fig2_phase_minimum_location() {
    let text = stdout(&run(&[
        "fig2",
        "--n",
        "3",
        "--x-policy",
        "sigma",
        "--sigma-range",
        "1:3:200",
    ]));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 200);
    let best = rows
        .iter()
        .min_by(|a, b| field(a, "V_v1").total_cmp(&field(b, "V_v1")))
        .unwrap();
    assert!((field(best, "sigma") - 1.18).abs() <= 0.02);
    assert!(text.trim_end().ends_with("# status: complete"));
}

#[test]
fn threshold_eigenvalues_for_one_pair() {
    let doc = json(&["stability", "--n", "1", "--kappa", "1", "--sigma", "1"]);
    let mut got: Vec<(f64, f64)> = doc["result"]["eigenvalues"]
        .as_array()
        .unwrap()
        .iter()
        .map(|z| (z[0].as_f64().unwrap(), z[1].as_f64().unwrap()))
        .collect();
    got.sort_by(|a, b| a.0.total_cmp(&b.0));
    let expected = [-2.0, -2.0, -1.0, -1.0, 0.0, 0.0];
    for ((re, im), e) in got.iter().zip(expected) {
        assert!((re - e).abs() < 1e-8 && im.abs() < 1e-8, "{got:?}");
    }
    assert_eq!(doc["result"]["stable"], Value::Bool(true));
    assert_eq!(doc["meta"]["params"]["n"], 1);
}

#[test]
fn s1_scan_violates_for_every_pair_count() {
    let text = stdout(&run(&[
        "vlf",
        "scan",
        "--kind",
        "S1",
        "--sigma-range",
        "1:3:50",
        "--n-range",
        "2:10",
    ]));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 50 * 9);
    for n in 2..=10 {
        let best = rows
            .iter()
            .filter(|r| r["n"] == n.to_string())
            .map(|r| field(r, "violation"))
            .fold(f64::INFINITY, f64::min);
        assert!(best < 0.0, "n = {n}: {best}");
    }
    assert!(text.lines().any(|l| l.starts_with("# params:")));
    assert!(text.trim_end().ends_with("# status: complete"));
}

#[test]
fn optimised_weight_round_trips() {
    for (kind, n) in [("S1", "3"), ("S2", "3"), ("S3", "4")] {
        let base = [
            "vlf", "eval", "--kind", kind, "--sigma", "1.7", "--n", n, "--k", "2",
        ];
        let opt = json(&[&base[..], &["--optimize"]].concat());
        let x = opt["result"]["x_opt"].as_f64().unwrap();
        let s = opt["result"]["s"].as_f64().unwrap();
        let x_arg = format!("{x:?}");
        let again = json(&[&base[..], &["--x", &x_arg]].concat());
        let s2 = again["result"]["s"].as_f64().unwrap();
        assert!(
            (s - s2).abs() <= 1e-10 * s.abs().max(1.0),
            "{kind}: {s} vs {s2}"
        );
    }
}

#[test]
fn output_file_and_parameter_file() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("p.json");
    std::fs::write(&params, r#"{"kappa": 2.0, "sigma": 3.0, "n": 2}"#).unwrap();
    let out = dir.path().join("ss.json");
    let o = run(&[
        "steady-state",
        "--params",
        params.to_str().unwrap(),
        "--sigma",
        "4",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success() && o.stdout.is_empty());
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["meta"]["params"]["sigma"], 4.0);
    assert_eq!(doc["meta"]["params"]["kappa"], 2.0);
    assert!(doc["result"]["threshold_residual"].as_f64().unwrap() < 1e-12);
}

#[test]
fn spectrum_shot_normalisation() {
    let base = [
        "spectrum",
        "--sigma",
        "2",
        "--n",
        "2",
        "--witness",
        "P+1,P+2,-2*Pp",
        "--omega-max",
        "50",
        "--points",
        "3",
    ];
    let raw = csv_rows(&stdout(&run(&base)));
    let shot = csv_rows(&stdout(&run(
        &[&base[..], &["--normalize", "shot"]].concat()
    )));
    for (r, s) in raw.iter().zip(&shot) {
        // vacuum variance 2 + 2 + 4
        assert!((field(r, "variance") / 8.0 - field(s, "variance")).abs() < 1e-14);
    }
    let numeric = csv_rows(&stdout(&run(
        &[&base[..], &["--method", "numeric"]].concat()
    )));
    for (r, s) in raw.iter().zip(&numeric) {
        assert!((field(r, "variance") - field(s, "variance")).abs() < 1e-10);
    }
}

#[test]
fn verify_reports_distance_and_seed() {
    let doc = json(&[
        "verify",
        "--sigma",
        "4",
        "--n",
        "1",
        "--witness",
        "P+1",
        "--traj",
        "500",
        "--seed",
        "7",
    ]);
    assert_eq!(doc["meta"]["seed"], 7);
    let r = &doc["result"];
    assert!((r["analytic"].as_f64().unwrap() - 1.5).abs() < 1e-9);
    assert!(r["sigma_distance"].as_f64().unwrap() < 4.0);
    let again = json(&[
        "verify",
        "--sigma",
        "4",
        "--n",
        "1",
        "--witness",
        "P+1",
        "--traj",
        "500",
        "--seed",
        "7",
        "--threads",
        "3",
    ]);
    assert_eq!(r["estimate"], again["result"]["estimate"]);
}

#[test]
fn validation_errors_exit_with_two() {
    for args in [
        &["stability", "--n", "2", "--sigma", "0.5"][..],
        &["vlf", "eval", "--kind", "S7", "--sigma", "2", "--n", "3"],
        &["vlf", "eval", "--kind", "S2", "--sigma", "2", "--n", "1"],
        &[
            "vlf",
            "scan",
            "--kind",
            "S1",
            "--sigma-range",
            "1:3",
            "--n-range",
            "2:3",
        ],
        &["spectrum", "--sigma", "2", "--n", "2", "--witness", "P+5"],
        &[
            "spectrum",
            "--sigma",
            "2",
            "--n",
            "2",
            "--witness",
            "Q+1",
            "--omega-min",
            "0",
        ],
        &["stability", "--n", "2", "--sigma", "2", "--bogus"],
        &["stability", "--n", "2", "--sigma", "2", "--format", "csv"],
    ] {
        let o = run(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn numerical_failure_exits_with_three() {
    // at this drive the linearised system is numerically singular
    let o = run(&[
        "spectrum",
        "--sigma",
        "1e200",
        "--n",
        "2",
        "--witness",
        "Q+1",
        "--method",
        "numeric",
        "--points",
        "2",
    ]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(String::from_utf8_lossy(&o.stderr).contains("singular"));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text
        .lines()
        .last()
        .unwrap()
        .starts_with("# status: incomplete"));
}
