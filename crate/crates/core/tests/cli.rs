use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn apspread(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apspread"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const ODE: &str =
    "kind = \"ode_oracle\"\nname = \"oracle\"\n[model]\na = \"1 | 0.5:1:0\"\nb = \"1\"\n";

#[test]
fn validate_echoes_defaults() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("c.toml"), ODE).unwrap();
    let o = apspread(d.path(), &["validate", "c.toml"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("[ode]") && s.contains("horizon = 50.0"), "{s}");
    assert!(s.ends_with("valid\n"));
}

#[test]
fn validate_reports_field_and_line() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("bad.toml"),
        "kind = \"ode_oracle\"\n[ode]\ndt = -0.1\n",
    )
    .unwrap();
    let o = apspread(d.path(), &["validate", "bad.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ode.dt"));

    fs::write(
        d.path().join("dup.toml"),
        "kind = \"ode_oracle\"\n[ode]\ndt = 0.1\ndt = 0.2\n",
    )
    .unwrap();
    let o = apspread(d.path(), &["validate", "dup.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 4"));
}

#[test]
fn run_writes_report_and_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("c.toml"), ODE).unwrap();
    let a = apspread(d.path(), &["--out", "a", "--workers", "2", "run", "c.toml"]);
    let b = apspread(
        d.path(),
        &["--out", "b", "--workers", "1", "--quiet", "run", "c.toml"],
    );
    assert!(a.status.success() && b.status.success());
    assert_eq!(stdout(&b), "PASS\n");
    let report = fs::read_to_string(d.path().join("a/oracle/report.txt")).unwrap();
    assert!(report.ends_with("PASS\n"));
    let csv_a = fs::read(d.path().join("a/oracle/ode_oracle.csv")).unwrap();
    let csv_b = fs::read(d.path().join("b/oracle/ode_oracle.csv")).unwrap();
    assert!(!csv_a.is_empty());
    assert_eq!(csv_a, csv_b);
}

#[test]
fn failed_check_gives_nonzero_exit() {
    let d = tempfile::tempdir().unwrap();
    // An oracle tolerance no integrator can meet at this step.
    let text = format!("{ODE}[ode]\ndt = 0.2\n[tolerances]\noracle = 1e-300\n");
    fs::write(d.path().join("c.toml"), text).unwrap();
    let o = apspread(d.path(), &["--quiet", "run", "c.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o), "FAIL\n");
}

#[test]
fn suite_runs_and_unknown_suite_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let o = apspread(d.path(), &["--quiet", "suite", "ode_oracle"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("[PASS] ode_oracle"));
    assert!(d
        .path()
        .join("out/ode_oracle/ode_oracle/ode_oracle.csv")
        .exists());
    assert!(d.path().join("out/ode_oracle/suite.txt").exists());
    let o = apspread(d.path(), &["suite", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_keeps_good_probes_when_one_fails() {
    let d = tempfile::tempdir().unwrap();
    let text = "kind = \"semiwave\"\nname = \"iso\"\n[semiwave]\nn = 200\ndt = 0.02\nhorizon = 40.0\n[sweep]\nmu = [1.0, 1e6]\n";
    fs::write(d.path().join("c.toml"), text).unwrap();
    let o = apspread(d.path(), &["run", "c.toml"]);
    assert_eq!(o.status.code(), Some(1));
    let s = stdout(&o);
    assert!(
        s.contains("[FAIL] mu=1000000") && s.contains("error:"),
        "{s}"
    );
    let summary = fs::read_to_string(d.path().join("out/iso/semiwave.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert!(d.path().join("out/iso/flux_00.csv").exists());
}
