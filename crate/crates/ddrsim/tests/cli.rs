use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ddrsim::config::RunConfig;
use ddrsim::output::sha256_hex;
use ddrsim_core::device::DeviceParams;
use serde_json::Value;

fn ddrsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddrsim")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL_CHEVRON: [&str; 4] = ["--set", "chevron.points=6", "--set", "chevron.times=40"];

fn run_into(dir: &Path, experiment: &str, extra: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut args = vec!["run", experiment, "--out", out];
    args.extend_from_slice(extra);
    let o = ddrsim(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    o
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn unknown_experiment_is_a_usage_error() {
    let o = ddrsim(&["run", "no-such-experiment"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_override_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ddrsim(&["run", "zz-scan", "--out", tmp.path().to_str().unwrap(), "--set", "scan.points=-3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!tmp.path().join("manifest.json").exists());
}

#[test]
fn validate_reports_problems_with_suggestions() {
    let o = ddrsim(&["validate", "--set", "sim.dtt=0.2", "--set", "device.q2.t2=40"]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("did you mean `sim.dt`"), "{text}");
    assert!(text.contains("t2"), "{text}");

    let ok = ddrsim(&["validate"]);
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(stdout(&ok).trim(), "ok");
}

#[test]
fn defaults_round_trip() {
    let o = ddrsim(&["defaults"]);
    assert!(o.status.success());
    assert_eq!(RunConfig::from_toml(&stdout(&o)).unwrap(), RunConfig::default());
}

#[test]
fn chevron_is_deterministic_across_runs_and_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    let mut one = SMALL_CHEVRON.to_vec();
    one.extend_from_slice(&["--jobs", "1"]);
    let mut two = SMALL_CHEVRON.to_vec();
    two.extend_from_slice(&["--jobs", "2"]);
    run_into(&a, "chevron", &one);
    run_into(&b, "chevron", &one);
    run_into(&c, "chevron", &two);
    for name in ["chevron.csv", "chevron_fit.csv", "config.toml"] {
        let x = fs::read(a.join(name)).unwrap();
        assert_eq!(x, fs::read(b.join(name)).unwrap(), "{name} differs between runs");
        assert_eq!(x, fs::read(c.join(name)).unwrap(), "{name} differs between job counts");
    }
}

#[test]
fn csv_headers_are_stable() {
    let tmp = tempfile::tempdir().unwrap();
    run_into(tmp.path(), "chevron", &SMALL_CHEVRON);
    assert_eq!(header(&tmp.path().join("chevron.csv")), "coupler_ghz,time_ns,p001");
    assert_eq!(header(&tmp.path().join("chevron_fit.csv")), "coupler_ghz,freq_mhz,amplitude,g_exact_mhz,two_g_mhz");
    let scan = tmp.path().join("scan");
    run_into(&scan, "coupling-scan", &[]);
    assert_eq!(header(&scan.join("coupling_scan.csv")), "coupler_ghz,g_eff_mhz,g_exact_mhz");
    let zz = tmp.path().join("zz");
    run_into(&zz, "zz-scan", &[]);
    assert_eq!(header(&zz.join("zz_scan.csv")), "coupler_ghz,xi2_mhz,xi3_mhz,xi4_mhz,total_mhz,exact_mhz");
}

#[test]
fn device_file_matches_preset() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("device.toml");
    let text = toml::to_string(&DeviceParams::paper_device()).unwrap();
    fs::write(&file, &text).unwrap();
    assert_eq!(toml::from_str::<DeviceParams>(&text).unwrap(), DeviceParams::paper_device());

    let (a, b) = (tmp.path().join("preset"), tmp.path().join("file"));
    run_into(&a, "zz-scan", &[]);
    run_into(&b, "zz-scan", &["--device", file.to_str().unwrap()]);
    assert_eq!(fs::read(a.join("zz_scan.csv")).unwrap(), fs::read(b.join("zz_scan.csv")).unwrap());

    let bad = ddrsim(&["validate", "--device", tmp.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn manifest_describes_the_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    run_into(tmp.path(), "coupling-scan", &["--seed", "11", "--jobs", "1"]);
    let m = manifest(tmp.path());
    assert_eq!(m["experiment"], "coupling-scan");
    assert_eq!(m["seed"], 11);
    assert_eq!(m["jobs"], 1);
    assert_eq!(m["ddrsim_version"], env!("CARGO_PKG_VERSION"));
    let config = fs::read(tmp.path().join("config.toml")).unwrap();
    assert_eq!(m["config_sha256"], sha256_hex(&config));
    let artifacts = m["artifacts"].as_array().unwrap();
    let files: Vec<&str> = artifacts.iter().map(|a| a["file"].as_str().unwrap()).collect();
    for want in ["coupling_scan.csv", "config.toml", "plot.py"] {
        assert!(files.contains(&want), "{files:?}");
    }
    for a in artifacts {
        let data = fs::read(tmp.path().join(a["file"].as_str().unwrap())).unwrap();
        assert_eq!(a["sha256"], sha256_hex(&data));
        assert_eq!(a["bytes"], data.len());
    }
    assert_eq!(m["summary"]["sign_changes"], 1);
}

#[test]
fn rerun_from_saved_config_reproduces_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    run_into(&first, "chevron", &SMALL_CHEVRON);
    let saved = first.join("config.toml");
    let second = tmp.path().join("second");
    run_into(&second, "chevron", &["--config", saved.to_str().unwrap()]);
    let hashes = |dir: &Path| {
        let m = manifest(dir);
        let mut v: Vec<(String, String)> = m["artifacts"]
            .as_array()
            .unwrap()
            .iter()
            .map(|a| (a["file"].as_str().unwrap().to_string(), a["sha256"].as_str().unwrap().to_string()))
            .collect();
        v.sort();
        v
    };
    assert_eq!(hashes(&first), hashes(&second));
    assert_eq!(manifest(&first)["config_sha256"], manifest(&second)["config_sha256"]);
}
