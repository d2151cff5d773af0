//! End-to-end runs of the `ert` binary.

use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn ert(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_ert"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn last_json(o: &Output) -> serde_json::Value {
    serde_json::from_str(stdout(o).lines().last().expect("summary line")).unwrap()
}

fn deaths_stream(n: usize) -> String {
    (0..n).map(|j| format!("{{\"arm\":{}}}\n", u8::from(j % 4 == 0))).collect()
}

#[test]
fn empty_stream_reports_unit_e_value() {
    let o = ert(&["monitor", "--variant", "binary"], "");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = last_json(&o);
    assert_eq!(s["e_value"], 1.0);
    assert_eq!(s["crossed"], false);
    assert_eq!(s["events"], 0);
}

#[test]
fn crossing_exits_ten_and_notifies() {
    let o = ert(&["monitor", "--variant", "deaths"], &deaths_stream(300));
    assert_eq!(o.status.code(), Some(10), "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("CROSSED index="), "{err}");
    let s = last_json(&o);
    assert_eq!(s["crossed"], true);
    assert!(s["crossed_at_time"].is_string());
}

#[test]
fn malformed_record_reports_its_line() {
    let input = "{\"arm\":1,\"outcome\":0}\n\n{\"arm\":0,\"outcome\":1,\"extra\":2}\n";
    let o = ert(&["monitor", "--variant", "binary"], input);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let o = ert(&["monitor", "--variant", "binary"], "{\"arm\":2,\"outcome\":0}\n");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));
}

#[test]
fn unsorted_survival_stream_is_an_error() {
    let input = "{\"time\":2,\"status\":1,\"arm\":1}\n{\"time\":1,\"status\":1,\"arm\":0}\n";
    let o = ert(&["monitor", "--variant", "survival", "--n-trt", "1", "--n-ctrl", "1"], input);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn flags_must_fit_the_variant() {
    for args in [
        &["monitor", "--variant", "deaths", "--c-max", "0.5"][..],
        &["monitor", "--variant", "binary", "--n-trt", "3"][..],
        &["monitor", "--variant", "survival"][..],
        &["monitor", "--variant", "multistate", "--strategy", "fixed:0.1"][..],
    ] {
        let o = ert(args, "");
        assert_eq!(o.status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn checkpoint_resume_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let cp = dir.path().join("cp.json");
    let cp = cp.to_str().unwrap();
    let full = deaths_stream(200);
    let (head, tail): (Vec<&str>, Vec<&str>) = {
        let lines: Vec<&str> = full.lines().collect();
        (lines[..70].to_vec(), lines[70..].to_vec())
    };
    let a = ert(&["monitor", "--variant", "deaths", "--checkpoint", cp, "--checkpoint-every", "16"], &head.join("\n"));
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let b = ert(&["monitor", "--variant", "deaths", "--checkpoint", cp], &tail.join("\n"));
    let whole = ert(&["monitor", "--variant", "deaths"], &full);
    assert_eq!(b.status.code(), whole.status.code());
    let (sb, sw) = (last_json(&b), last_json(&whole));
    assert_eq!(sb["log_e_value"].as_f64().unwrap().to_bits(), sw["log_e_value"].as_f64().unwrap().to_bits());
    assert_eq!(sb["crossed_at"], sw["crossed_at"]);

    let other = ert(&["monitor", "--variant", "deaths", "--checkpoint", cp, "--alpha", "0.01"], "");
    assert_eq!(other.status.code(), Some(1));
}

#[test]
fn trace_prints_every_step() {
    let o = ert(&["monitor", "--variant", "deaths", "--trace"], &deaths_stream(5));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 6);
    let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(first["index"], 1);
}

fn write_scenario(dir: &Path, body: &str) -> String {
    let path = dir.join("scenario.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn simulate_is_deterministic_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(
        dir.path(),
        r#"{"design":{"variant":"continuous","mu_trt":0.4,"design_d":0.4},"n_sims":64,"seed":9}"#,
    );
    let one = ert(&["--threads", "1", "simulate", "--scenario", &sc, "--json"], "");
    let many = ert(&["--threads", "4", "simulate", "--scenario", &sc, "--json"], "");
    let seq = ert(&["--sequential", "simulate", "--scenario", &sc, "--json"], "");
    assert_eq!(one.status.code(), Some(0), "{}", stderr(&one));
    assert_eq!(stdout(&one), stdout(&many));
    assert_eq!(stdout(&one), stdout(&seq));
    let report: serde_json::Value = serde_json::from_str(&stdout(&one)).unwrap();
    assert_eq!(report["kind"], "operating_characteristics");
    assert_eq!(report["design_size"], 200);
}

#[test]
fn scenario_schema_is_strict() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), r#"{"design":{"variant":"binary","p_ctrl":0.3,"p_trt":0.2,"oops":1},"n_sims":5}"#);
    let o = ert(&["simulate", "--scenario", &sc], "");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("invalid scenario"), "{}", stderr(&o));
}

#[test]
fn empty_trajectory_export_has_only_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), r#"{"design":{"variant":"binary","p_ctrl":0.3,"p_trt":0.3,"n_patients":100},"n_sims":1}"#);
    let csv = dir.path().join("t.csv");
    let svg = dir.path().join("t.svg");
    let o = ert(
        &["trajectories", "--scenario", &sc, "--n-trials", "0", "--out", csv.to_str().unwrap(), "--svg", svg.to_str().unwrap()],
        "",
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&csv).unwrap(), "trial,index,lambda,multiplier,wealth\n");
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn power_table_and_exports() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("p.csv");
    let json = dir.path().join("p.json");
    let o = ert(
        &["power", "--variant", "binary", "--p1", "0.40", "--p2", "0.35", "--power", "0.80",
          "--csv", csv.to_str().unwrap(), "--json", json.to_str().unwrap()],
        "",
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("2942"));
    assert!(std::fs::read_to_string(&csv).unwrap().contains(",2942,"));
    let j: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(j["rows"][0]["n_total"], 2942);
    assert_eq!(j["schema_version"], 1);

    let o = ert(&["power", "--variant", "deaths", "--p1", "0.25", "--p2", "0.15"], "");
    let out = stdout(&o);
    assert!(out.contains(" 500 ") && out.contains("1250") && out.contains("250"), "{out}");
    assert_eq!(ert(&["power", "--variant", "continuous"], "").status.code(), Some(1));
}

#[test]
fn compare_is_seeded() {
    let args = ["compare", "--arr", "0.05", "--baselines", "0.20,0.30", "--n-sims", "20", "--seed", "5"];
    let a = ert(&args, "");
    let b = ert(&args, "");
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&b));
    assert_eq!(stdout(&a).lines().count(), 3);
}
