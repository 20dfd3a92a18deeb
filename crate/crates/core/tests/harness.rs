use std::fs;
use std::path::Path;
use std::process::Command;

use rvseries::harness::{
    compute, parse_config, preset_names, publish, run_experiment, verify_checksums, ExperimentConfig, MANIFEST_FILE,
    OUT_DIR_ENV, REPORT_FILE,
};

const SMALL: &str = "\
[run]
name = small
seed = 5
n = 400
workers = 1

[innovation]
kind = compound-poisson
rate = 1.5
alpha = 1.5
p = 0.5

[coefficients]
kind = sre
law = uniform
lower = -0.8
upper = 0.8

[series]
grid = 20
truncation = adaptive
tolerance = 1e-9
max_terms = 400

[estimators]
spectral_k = 40
delta_grid = 0.5, 0.1
epsilon_grid = 0.5, 1
bootstrap = 20
";

fn small(out: &Path) -> ExperimentConfig {
    let mut c = parse_config(SMALL).unwrap();
    c.out = Some(out.to_path_buf());
    c
}

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rvseries"));
    cmd.env_remove(OUT_DIR_ENV);
    cmd
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = run_experiment(&small(&tmp.path().join("a"))).unwrap();
    let b = run_experiment(&small(&tmp.path().join("b"))).unwrap();
    assert_eq!(a.manifest.checksums, b.manifest.checksums);
    for file in a.manifest.checksums.keys() {
        assert_eq!(fs::read(a.dir.join(file)).unwrap(), fs::read(b.dir.join(file)).unwrap(), "{file}");
    }
    assert!(verify_checksums(&a.dir).unwrap().is_empty());
    assert_eq!(
        listing(&a.dir),
        ["manifest.json", "modulus.csv", "panel.csv", "report.json", "tail_curve.csv"]
    );
}

#[test]
fn worker_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = small(tmp.path());
    let one = compute(&config).unwrap();
    config.workers = 4;
    let four = compute(&config).unwrap();
    assert_eq!(one.files, four.files);
}

#[test]
fn tampering_is_detected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_experiment(&small(&tmp.path().join("run"))).unwrap();
    fs::write(out.dir.join("panel.csv"), "replicate\n").unwrap();
    assert_eq!(verify_checksums(&out.dir).unwrap(), ["panel.csv"]);
}

#[test]
fn publish_replaces_whole_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("out");
    let files = |pairs: &[(&str, &str)]| {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.as_bytes().to_vec()))
            .collect()
    };
    publish(&dir, &files(&[("a.txt", "1"), ("stale.txt", "x")])).unwrap();
    publish(&dir, &files(&[("a.txt", "2")])).unwrap();
    assert_eq!(listing(&dir), ["a.txt"]);
    assert_eq!(fs::read_to_string(dir.join("a.txt")).unwrap(), "2");
    assert_eq!(listing(tmp.path()), ["out"]);
}

#[test]
fn failed_publish_leaves_nothing_behind() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "").unwrap();
    let files = [("a.txt".to_string(), b"1".to_vec())].into_iter().collect();
    assert!(publish(&blocker.join("out"), &files).is_err());
    let bad_name = [("missing/a.txt".to_string(), b"1".to_vec())].into_iter().collect();
    assert!(publish(&tmp.path().join("out"), &bad_name).is_err());
    assert_eq!(listing(tmp.path()), ["file"]);
}

#[test]
fn cli_lists_presets() {
    let out = bin().arg("presets").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let listed: Vec<&str> = text.lines().collect();
    assert_eq!(listed, preset_names());
    assert_eq!(listed.len(), 9);
}

#[test]
fn cli_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.conf");
    fs::write(&bad, "[innovation]\nkind = pareto-scalar\nalpha = -1\n").unwrap();
    let out = bin().args(["verify"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));
    assert_eq!(bin().arg("no-such-command").output().unwrap().status.code(), Some(1));
    assert_eq!(bin().args(["verify", "no-such-preset"]).output().unwrap().status.code(), Some(1));
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));

    let good = tmp.path().join("small.conf");
    fs::write(&good, SMALL).unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = bin()
        .args(["verify"])
        .arg(&good)
        .arg("--out")
        .arg(blocker.join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cli_simulate_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let good = tmp.path().join("small.conf");
    fs::write(&good, SMALL).unwrap();

    let out = bin()
        .args(["simulate"])
        .arg(&good)
        .env(OUT_DIR_ENV, tmp.path().join("root"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let panel = fs::read_to_string(tmp.path().join("root/small/panel.csv")).unwrap();
    assert_eq!(panel.lines().count(), 401);

    let run = tmp.path().join("run");
    let out = bin()
        .args(["verify"])
        .arg(&good)
        .arg("--out")
        .arg(&run)
        .args(["--seed", "9"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = String::from_utf8(out.stdout).unwrap();
    assert!(run.join(MANIFEST_FILE).exists());
    let report: serde_json::Value = serde_json::from_slice(&fs::read(run.join(REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(report["seed"], 9);
    assert_eq!(report["innovation"], "compound-poisson");
    assert_eq!(report["coefficients"], "sre");
    assert_eq!(report["series"]["warnings"], serde_json::json!([]));

    let again = bin().arg("report").arg(&run).output().unwrap();
    assert!(again.status.success());
    assert!(summary.starts_with(&String::from_utf8(again.stdout).unwrap()));

    fs::write(run.join("panel.csv"), "tampered\n").unwrap();
    assert_eq!(bin().arg("report").arg(&run).output().unwrap().status.code(), Some(2));
}

#[test]
fn vanishing_coefficients_are_flagged() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = parse_config(
        "[run]\nn = 300\n[innovation]\nkind = single-jump\nalpha = 1.5\n\
         [coefficients]\nkind = single-term\nintercept = 0\nslope = 1\n\
         [series]\ngrid = 10\ntruncation = fixed\nterms = 1\n",
    )
    .unwrap();
    config.out = Some(tmp.path().join("run"));
    let series = compute(&config).unwrap().report.series.unwrap();
    assert_eq!(series.warnings.len(), 1);
    assert!(series.warnings[0].contains("t = [0.0]"));
}
