use std::path::PathBuf;
use std::process::{Command, Output};

fn nscert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nscert"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario(name: &str) -> String {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", name]
        .iter()
        .collect();
    path.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn constants_prints_csv() {
    let out = nscert(&["constants", "--n", "4", "--lambda", "30", "--box", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("n,d,lattice,K_n,sup_box_lo,sup_box_hi,sigma_lo,sigma_hi")
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 8);
    assert_eq!(row[0], "4");
    assert_eq!(row[1], "3");
    let lo: f64 = row[6].parse().unwrap();
    let hi: f64 = row[7].parse().unwrap();
    assert!(lo <= hi);
    assert!(stderr(&out).contains("K_4"));
}

#[test]
fn constants_rejects_divergent_index() {
    let out = nscert(&["constants", "--n", "1.2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("diverges"));
}

#[test]
fn certify_admissible_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let tube = dir.path().join("tube.csv");
    let out = nscert(&[
        "certify",
        &scenario("scenario-3.json"),
        "--tube-csv",
        tube.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("admissible for |G| >= 2.00"));
    assert!(text.contains("status: certified"));
    let csv = std::fs::read_to_string(tube).unwrap();
    assert_eq!(csv.lines().next(), Some("t,tube"));
    assert_eq!(csv.lines().count(), 102);
}

#[test]
fn certify_large_datum_is_refused_with_grid_output() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.csv");
    let out = nscert(&[
        "certify",
        &scenario("large-datum.json"),
        "--grid-csv",
        grid.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout(&out).contains("numerical grid fallback"));
    let csv = std::fs::read_to_string(grid).unwrap();
    assert_eq!(csv.lines().next(), Some("m,t_m,R_m,S_m,status"));
}

#[test]
fn malformed_scenario_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"d\": 3,\n  \"n\": ,\n}").unwrap();
    let out = nscert(&["certify", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 3, column"), "{}", stderr(&out));
    let missing = nscert(&["certify", dir.path().join("none.json").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = nscert(&[
        "run",
        &scenario("scenario-3.json"),
        "--ref-radius",
        "3",
        "--t-end",
        "0.5",
        "--samples",
        "5",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("containment margin"));
    for f in [
        "trajectory.csv",
        "reference.csv",
        "tube.csv",
        "containment.csv",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let containment = std::fs::read_to_string(dir.path().join("containment.csv")).unwrap();
    assert_eq!(containment.lines().count(), 6);
}

#[test]
fn run_refuses_inadmissible_sets_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "run",
        &scenario("scenario-2.json"),
        "--g-radius",
        "1",
        "--ref-radius",
        "0",
        "--t-end",
        "0.2",
    ];
    let d = dir.path().to_str().unwrap();
    let out = nscert(&[&args[..], &["--out-dir", d]].concat());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--force"));
    let forced = nscert(&[&args[..], &["--out-dir", d, "--force"]].concat());
    assert_eq!(forced.status.code(), Some(0), "{}", stderr(&forced));
    assert!(stdout(&forced).contains("admissible: false"));
    assert!(dir.path().join("trajectory.csv").exists());
}

#[test]
fn reproduce_command_flags_the_one_mismatch() {
    let out = nscert(&["reproduce-paper"]);
    assert_eq!(out.status.code(), Some(2));
    let text = stdout(&out);
    let failures: Vec<&str> = text.lines().filter(|l| l.ends_with("FAIL")).collect();
    assert_eq!(failures.len(), 1, "{text}");
    assert!(failures[0].starts_with("scenario 1 rough tube coefficient"));
}
