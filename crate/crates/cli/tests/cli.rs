use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn noma_harq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noma-harq")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = noma_harq(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Header names and data rows of a CSV output, skipping the `#` lines.
fn table(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column(text: &str, name: &str) -> Vec<f64> {
    let (header, rows) = table(text);
    let i = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

fn json(args: &[&str]) -> Value {
    let mut args = args.to_vec();
    args.extend(["--format", "json"]);
    serde_json::from_str(&ok(&args)).unwrap()
}

#[test]
fn analyze_reference_allocation() {
    let out = ok(&["analyze", "--users", "3", "--rate", "0.25", "--snr-db=-2.02"]);
    assert!(out.starts_with("# noma-harq "));
    let max = column(&out, "e_i").into_iter().fold(0.0, f64::max);
    assert!((max - 1.12e-2).abs() < 0.05e-2, "max PER {max}");
    assert_eq!(column(&out, "eta").len(), 3);
}

#[test]
fn single_user_at_high_snr_delivers_everything() {
    let out = ok(&["analyze", "--users", "1", "--rate", "0.5", "--snr-db", "20"]);
    assert!(column(&out, "e_i")[0] < 1e-12);
    assert!((column(&out, "eta")[0] - 0.5).abs() < 1e-9);
}

#[test]
fn emitted_matrix_rows_sum_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = dir.path().join("pi.csv");
    let states = dir.path().join("p.csv");
    ok(&[
        "analyze",
        "--users",
        "2",
        "--emit-matrix",
        matrix.to_str().unwrap(),
        "--emit-states",
        states.to_str().unwrap(),
    ]);
    let (header, rows) = table(&std::fs::read_to_string(&matrix).unwrap());
    assert_eq!(header.len(), 10);
    assert_eq!(rows.len(), 9);
    for row in &rows {
        let sum: f64 = row[1..].iter().map(|x| x.parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-12, "{} sums to {sum}", row[0]);
    }
    let p = column(&std::fs::read_to_string(&states).unwrap(), "stationary_prob");
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn one_point_sweep_equals_analyze() {
    let args = ["--users", "3", "--rate", "0.5", "--snr-db", "2.5"];
    let a = ok(&[&["analyze"], &args[..]].concat());
    let s = ok(&[&["sweep"], &args[..]].concat());
    assert_eq!(column(&a, "e_i"), column(&s, "e_i"));
    assert_eq!(column(&a, "eta"), column(&s, "eta"));
}

#[test]
fn sweep_per_falls_with_snr() {
    let out = ok(&["sweep", "--users", "3", "--rate", "0.5", "--snr-db", "0:9:1"]);
    let per = column(&out, "e_i");
    assert_eq!(per.len(), 30);
    for user in 0..3 {
        let curve: Vec<f64> = per.iter().skip(user).step_by(3).copied().collect();
        assert!(curve.windows(2).all(|w| w[1] <= w[0]), "user {user}: {curve:?}");
    }
}

#[test]
fn five_users_reach_an_error_floor() {
    let out = ok(&["sweep", "--users", "5", "--rate", "0.5", "--snr-db", "24,27"]);
    let per = column(&out, "e_i");
    let worst = |pts: &[f64]| pts.iter().copied().fold(0.0, f64::max);
    let (a, b) = (worst(&per[..5]), worst(&per[5..]));
    assert!(b > 1e-6, "no floor: {b}");
    assert!(b / a > 0.5, "still falling: {a} -> {b}");
}

#[test]
fn sweep_with_oma_baseline() {
    let out = ok(&["sweep", "--users", "3", "--rate", "0.5", "--snr-db", "1", "--oma"]);
    let (header, rows) = table(&out);
    assert_eq!(header[0], "scheme");
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[3][0], "oma");
    let eta = column(&out, "eta");
    assert!(eta[3] < eta[..3].iter().sum::<f64>() / 3.0);
}

#[test]
fn output_header_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.csv");
    let first_s = first.to_str().unwrap();
    ok(&["simulate", "--users", "2", "--slots", "20000", "--seed", "7", "--snr-db", "0", "--out", first_s]);
    let again = ok(&["simulate", "--config", first_s]);
    assert_eq!(std::fs::read_to_string(&first).unwrap(), again);

    let doc = json(&["analyze", "--users", "2", "--snr-db", "1"]);
    let saved = dir.path().join("a.json");
    std::fs::write(&saved, doc.to_string()).unwrap();
    let back = json(&["analyze", "--config", saved.to_str().unwrap()]);
    assert_eq!(doc, back);
}

#[test]
fn simulation_is_seeded() {
    let run = |seed: &str| ok(&["simulate", "--slots", "30000", "--seed", seed, "--snr-db=-1"]);
    assert_eq!(run("3"), run("3"));
    assert_ne!(column(&run("3"), "p_s"), column(&run("4"), "p_s"));
}

#[test]
fn uncoordinated_simulation_reports_plan_size() {
    let out = ok(&[
        "simulate", "--scenario", "uncoordinated", "--users", "2", "--n-hat", "3", "--slots", "20000", "--snr-db", "3",
    ]);
    let (header, rows) = table(&out);
    assert_eq!(header.len(), 14);
    assert_eq!(rows.len(), 3);
    assert!(column(&out, "n_hat").iter().all(|&n| n == 3.0));
    assert!(column(&out, "mean_tx_power").iter().all(|p| p.is_finite()));
}

#[test]
fn cellplan_json() {
    let doc = json(&["cellplan", "--n-hat", "4", "--r-outer", "1000"]);
    let radii: Vec<f64> = doc["ring_radii"].as_array().unwrap().iter().map(|r| r.as_f64().unwrap()).collect();
    assert_eq!(radii.len(), 4);
    assert!((radii[3] - 1000.0).abs() < 1e-9);
    assert!((radii[0] - 500.0).abs() < 1e-9);
    let rows = doc["assignment"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(doc["alphas"].as_array().unwrap().len(), 4);
    assert!(doc["config"]["n_hat"] == 4);
}

#[test]
fn min_blocklength_single_user() {
    let out = ok(&["min-blocklength", "--users", "1", "--info-bits", "50", "--snr-db", "0", "--target-per", "1e-5"]);
    let n = column(&out, "n_min")[0] as u32;
    assert!(column(&out, "max_per")[0] <= 1e-5);
    let per_at = |n: u32| {
        let rate = format!("{}", 50.0 / n as f64);
        column(&ok(&["analyze", "--users", "1", "--blocklength", &n.to_string(), "--rate", &rate]), "e_i")[0]
    };
    assert!(per_at(n) <= 1e-5);
    assert!(per_at(n - 1) > 1e-5);
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited")
}

#[test]
fn exit_codes() {
    assert_eq!(code(&noma_harq(&["analyze", "--users", "2", "--alphas", "0.5,0.3,0.2"])), 2);
    assert_eq!(code(&noma_harq(&["analyze", "--bogus"])), 2);
    assert_eq!(code(&noma_harq(&["analyze", "--users", "9"])), 2);
    assert_eq!(code(&noma_harq(&["analyze", "--snr-db", "0,1"])), 2);
    assert_eq!(code(&noma_harq(&["analyze", "--config", "/nonexistent/run.json"])), 2);
    // all packets fail: the chain has no unique stationary distribution
    assert_eq!(code(&noma_harq(&["analyze", "--users", "3", "--rate", "2"])), 3);
    assert_eq!(
        code(&noma_harq(&["min-blocklength", "--users", "2", "--snr-db=-10", "--n-cap", "120", "--generations", "5"])),
        3
    );
}

#[test]
fn writes_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let stdout = ok(&["analyze", "--out", path.to_str().unwrap()]);
    assert!(stdout.is_empty());
    assert!(Path::new(&path).exists());
    assert_eq!(column(&std::fs::read_to_string(&path).unwrap(), "e_i").len(), 3);
}
