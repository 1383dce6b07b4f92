use std::path::PathBuf;
use std::process::Command;

fn desk_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.cfg")
}

fn ceps() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ceps"))
}

#[test]
fn runs_a_variant_and_writes_artifacts() {
    let out = tempfile::tempdir().unwrap();
    let status = ceps()
        .arg("--config")
        .arg(desk_config())
        .args(["--algo", "ceps-nodp-perf", "--seed", "3", "--out"])
        .arg(out.path())
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let stdout = String::from_utf8_lossy(&status.stdout);
    assert!(stdout.contains("ceps-nodp-perf"));
    for f in ["trace.csv", "timing.csv", "manifest.json", "summary.json", "objective_vs_round.csv"] {
        assert!(out.path().join(f).exists(), "missing {f}");
    }
    let manifest = std::fs::read_to_string(out.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 3"));
}

#[test]
fn sweep_writes_a_table() {
    let out = tempfile::tempdir().unwrap();
    let status = ceps()
        .arg("--config")
        .arg(desk_config())
        .args(["--algo", "ceps-nodp-perf", "--sweep", "r=0.3,0.8", "--allow-diverge", "--out"])
        .arg(out.path())
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "[problem]\nobjective = linreg\nn = 10\ns = 2\nm = 2\nbogus_key = 1\n").unwrap();
    let out = ceps().arg("--config").arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_key"));

    let missing = ceps().args(["--config", "/nonexistent.cfg"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn unconverged_runs_exit_with_one() {
    let out = tempfile::tempdir().unwrap();
    let status = ceps()
        .arg("--config")
        .arg(desk_config())
        .args(["--algo", "ceps-nodp-perf", "--max-rounds", "3", "--out"])
        .arg(out.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}
