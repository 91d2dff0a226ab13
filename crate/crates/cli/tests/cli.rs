use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mmstab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmstab"))
        .args(args)
        .env_remove("MMSTAB_OUT")
        .output()
        .expect("binary runs")
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn no_arguments_prints_usage_and_fails() {
    let out = mmstab(&[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_flag_is_a_config_error() {
    assert_eq!(mmstab(&["simulate", "--bogus"]).status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[network]\nlambda = 0.1\n").unwrap();
    let out = mmstab(&["simulate", "--config", arg(&cfg), "--out", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infeasible_threshold_query_has_its_own_code() {
    let out = mmstab(&["threshold", "--mode", "NO_COORDINATOR", "--p", "0.5", "--lambda-r", "0.5"]);
    assert_eq!(out.status.code(), Some(3));
    let out = mmstab(&["threshold", "--mode", "NO_COORDINATOR", "--M", "2", "--p", "0.5", "--lambda-r", "0.2"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "0.4");
}

#[test]
fn boundary_row_carries_theoretical_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let out = mmstab(&[
        "boundary",
        "--config",
        arg(&config("coordinator_m1.toml")),
        "--out",
        arg(dir.path()),
        "--slots",
        "200000",
        "--reps",
        "4",
        "--tol",
        "0.02",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("table.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "threshold_theoretical").unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r[col].parse::<f64>().unwrap() == 0.15));
    assert!(dir.path().join("config.toml").exists());
    assert!(dir.path().join("boundary.json").exists());
}

#[test]
fn exported_kernel_verifies_with_pass() {
    let dir = tempfile::tempdir().unwrap();
    let build = dir.path().join("build");
    let out = mmstab(&["verify", "--config", arg(&config("verify_m1.toml")), "--out", arg(&build)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let echoed = build.join("config.toml");
    let kernel = build.join("kernel.json");
    let check = dir.path().join("check");
    let out = mmstab(&[
        "verify",
        "--config",
        arg(&echoed),
        "--kernel",
        arg(&kernel),
        "--out",
        arg(&check),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("certificate PASS"));
    let cert: serde_json::Value =
        serde_json::from_slice(&std::fs::read(check.join("certificate.json")).unwrap()).unwrap();
    assert_eq!(cert["verdict"], "PASS");
}

#[test]
fn simulate_is_reproducible_from_the_echoed_config() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let out = mmstab(&["simulate", "--M", "2", "--lambda-g", "0.2", "--slots", "2000", "--seed", "9", "--out", arg(&a)]);
    assert!(out.status.success());
    let out = mmstab(&["simulate", "--config", arg(&a.join("config.toml")), "--out", arg(&b)]);
    assert!(out.status.success());
    let ta = std::fs::read(a.join("trace.csv")).unwrap();
    assert_eq!(ta, std::fs::read(b.join("trace.csv")).unwrap());
    assert!(String::from_utf8_lossy(&ta).starts_with("t,R1,R2,G1,G2\n"));
}

#[test]
fn output_directory_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_mmstab"))
        .args(["simulate", "--slots", "10"])
        .env("MMSTAB_OUT", &target)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(target.join("trace.csv").exists());
}

#[test]
fn report_merges_tables() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s");
    let cfg = config("coordinator_m1.toml");
    let args = ["sweep", "--config", arg(&cfg), "--slots", "100000", "--reps", "4"];
    let mut first = args.to_vec();
    first.extend(["--out", arg(&s)]);
    assert!(mmstab(&first).status.success());
    let r = dir.path().join("r");
    let t = s.join("table.csv");
    let out = mmstab(&["report", "--out", arg(&r), arg(&t), arg(&t)]);
    assert!(out.status.success());
    let merged = std::fs::read_to_string(r.join("table.csv")).unwrap();
    assert_eq!(merged, std::fs::read_to_string(&t).unwrap());
    assert!(r.join("report.json").exists());
}
