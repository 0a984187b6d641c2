use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_optomech"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn digests(dir: &Path) -> BTreeMap<String, String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            let bytes = fs::read(e.path()).unwrap();
            let hex = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
            (e.file_name().to_string_lossy().into_owned(), hex)
        })
        .collect()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(dir.join("out/summary.json")).unwrap()).unwrap()
}

const SMALL_MAP: &str = "
[grid]
x_min_um = -0.8
x_max_um = 0.8
nx = 5
z_min_um = -1.5
z_max_um = 1.5
nz = 5
";

#[test]
fn same_seed_gives_identical_artifacts() {
    let runs: Vec<_> = ["1", "3"]
        .iter()
        .map(|threads| {
            let dir = tempfile::tempdir().unwrap();
            let out = run(
                dir.path(),
                SMALL_MAP,
                &["map-force", "--seed", "5", "--threads", threads],
            );
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            let d = digests(&dir.path().join("out"));
            (dir, d)
        })
        .collect();
    assert_eq!(runs[0].1, runs[1].1);
    assert_eq!(runs[0].1.len(), 4);

    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), SMALL_MAP, &["map-force", "--seed", "6"]);
    let other = digests(&dir.path().join("out"));
    assert_ne!(other["force_map.csv"], runs[0].1["force_map.csv"]);
}

#[test]
fn simulate_is_reproducible() {
    let config = "
[device]
preset = \"scaled\"
[simulation]
duration_damping_times = 50
export_every = 50
";
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = run(d.path(), config, &["simulate", "--seed", "9"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(digests(&a.path().join("out")), digests(&b.path().join("out")));
}

#[test]
fn every_file_carries_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), SMALL_MAP, &["map-force", "--seed", "5"]);
    assert!(out.status.success());
    for (name, _) in digests(&dir.path().join("out")) {
        let text = fs::read_to_string(dir.path().join("out").join(&name)).unwrap();
        if name.ends_with(".csv") {
            let first = text.lines().next().unwrap();
            assert!(first.starts_with("# optomech ") && first.contains("config_hash=") && first.ends_with("seed=5"));
        } else {
            let v: serde_json::Value = serde_json::from_str(&text).unwrap();
            assert_eq!(v["provenance"]["seed"], 5, "{name}");
        }
    }
}

#[test]
fn zero_duration_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "[simulation]\nduration_s = 0\n", &["simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("simulation.duration_s"));
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "[device]\nf1_hz = 1000\n", &["psd"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn noiseless_map_has_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!("{SMALL_MAP}\n[protocol]\nnoise_scale = 0\n");
    let out = run(dir.path(), &config, &["map-force", "--assert"]);
    assert!(out.status.success());
    let s = summary(dir.path());
    assert!(s["stats"]["max_relative_error"].as_f64().unwrap() < 1e-6);
}

#[test]
fn truth_free_map_omits_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!("{SMALL_MAP}\n[protocol]\ncompare = false\n");
    let out = run(dir.path(), &config, &["map-force"]);
    assert!(out.status.success());
    assert!(summary(dir.path()).get("stats").is_none());
    assert!(!dir.path().join("out/force_truth.csv").exists());
}

#[test]
fn failed_assertion_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!("{SMALL_MAP}\n[assert]\nmax_rms_angle_deg = 1e-9\n");
    assert_eq!(
        run(dir.path(), &config, &["map-force", "--assert"]).status.code(),
        Some(4)
    );
    // the same run without --assert succeeds
    assert!(run(dir.path(), &config, &["map-force"]).status.success());
}

#[test]
fn brownian_variance_matches_equipartition() {
    let dir = tempfile::tempdir().unwrap();
    let config = "
[device]
preset = \"scaled\"
[simulation]
duration_damping_times = 2000
export_every = 1000
";
    let out = run(dir.path(), config, &["simulate", "--seed", "21", "--assert"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(dir.path());
    for e in s["relative_error"].as_array().unwrap() {
        assert!(e.as_f64().unwrap().abs() < 0.05);
    }
}

#[test]
fn stability_area_curve_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let config = "
[device]
preset = \"instability\"
[grid]
nx = 21
nz = 21
[stability]
power_uw = 300
";
    let out = run(dir.path(), config, &["stability", "--assert"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(dir.path());
    assert_eq!(s["area_curve_monotone"], true);
    assert!(s["area_um2"].as_f64().unwrap() > 0.0);
    let p = s["threshold"]["power_w"].as_f64().unwrap();
    assert!(p > 30e-6 && p < 400e-6, "{p}");
}

#[test]
fn splitting_at_zero_power_reproduces_the_bare_doublet() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!("{SMALL_MAP}\n[splitting]\npower_uw = 0\n");
    let out = run(dir.path(), &config, &["splitting", "--assert"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(dir.path());
    assert_eq!(s["compared"], 25);
    assert!(s["rms_relative_deviation"].as_f64().unwrap() < 0.01);
}
