use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_choice-dynamics"))
}

fn scenario(name: &str) -> String {
    format!("{}/scenarios/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

#[test]
fn run_writes_csv_with_stable_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f1.csv");
    let o = run(&[
        "run",
        &scenario("figure1.scn"),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,S_1,S_2,S_3,S_4,P_1,P_2,P_3,P_4,U_bar,U_avg,entropy"
    );
    let times: Vec<f64> = lines
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(times.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(*times.last().unwrap(), 120.0);
}

fn compare_into(dir: &Path) -> (Vec<u8>, Vec<u8>) {
    let o = run(&[
        "compare",
        &scenario("figure1.scn"),
        "--out-dir",
        dir.to_str().unwrap(),
        "--seed",
        "5",
    ]);
    assert!(o.status.success());
    (
        std::fs::read(dir.join("figure1_neq.csv")).unwrap(),
        std::fs::read(dir.join("figure1_mnl.csv")).unwrap(),
    )
}

#[test]
fn compare_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = compare_into(a.path());
    let second = compare_into(b.path());
    assert_eq!(first, second);
    assert_ne!(first.0, first.1);
}

#[test]
fn overrides_change_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("short.csv");
    let o = run(&[
        "--dt",
        "0.5",
        "--t-end",
        "30",
        "run",
        &scenario("figure1.scn"),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1 + 61);
}

#[test]
fn verify_appendix_b_reports_all_vertices() {
    let o = run(&["verify-appendix-b"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("1000/1000 runs converged to a vertex"));
}

#[test]
fn verify_suites_pass() {
    for cmd in ["verify-ces", "verify-appendix-c", "verify-thermo"] {
        let o = run(&[cmd]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{cmd}: {}",
            String::from_utf8_lossy(&o.stdout)
        );
    }
}

#[test]
fn figure_commands_write_both_runs() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, stem) in [("figure1", "figure1"), ("figure2", "figure2")] {
        let o = run(&[cmd, "--out-dir", dir.path().to_str().unwrap()]);
        assert!(o.status.success());
        for suffix in ["neq", "mnl"] {
            assert!(dir.path().join(format!("{stem}_{suffix}.csv")).exists());
        }
    }
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.scn");
    let src = std::fs::read_to_string(scenario("figure1.scn")).unwrap();
    std::fs::write(&bad, src.replace("share = 0.4", "share = 0.3")).unwrap();
    let out = dir.path().join("x.csv");
    let o = run(&["run", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line"), "{err}");

    let o = run(&["run", "/nonexistent.scn", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&[
        "run",
        &scenario("figure1.scn"),
        "--out",
        out.to_str().unwrap(),
        "--t-end",
        "10",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn blown_up_integration_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let o = run(&[
        "--dt",
        "1e300",
        "--t-end",
        "1e300",
        "run",
        &scenario("figure1.scn"),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(String::from_utf8_lossy(&o.stderr).contains("last valid t"));
}
