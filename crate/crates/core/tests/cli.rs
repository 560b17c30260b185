use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn microcanon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_microcanon")).args(args).output().unwrap()
}

fn run(sub: &str, config: &Path, out: &Path) -> Output {
    microcanon(&[sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn regime(dir: &Path) -> String {
    let phase: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("phase.json")).unwrap()).unwrap();
    phase["regime"].as_str().unwrap().to_string()
}

const SMALL_SAMPLE: &str = r#"{
  "observables": {"family": "POWERS", "exponents": [1, 2]},
  "targets": ["1", "1.5"],
  "n_list": [8, 16],
  "delta_list": ["0.1"],
  "chains": {"burn_in": 50, "thin": 2, "n_samples": 100},
  "chains_per_cell": 2,
  "seed": 5,
  "mode": "SAMPLE"
}"#;

#[test]
fn classifies_shipped_configs() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, want) in [
        ("lp2_localized.json", "EXTRANEOUS"),
        ("lp2_delocalized.json", "INTERIOR_S1"),
        ("lp3.json", "FULL_TILT_S2"),
        ("single.json", "SINGLE"),
    ] {
        let out = tmp.path().join(name);
        let o = run("classify", &configs().join(name), &out);
        assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(regime(&out), want, "{name}");
        assert!(out.join("manifest.json").exists() && out.join("config.json").exists());
    }
}

#[test]
fn validate_prints_report() {
    let o = microcanon(&["validate", "--config", configs().join("lp3.json").to_str().unwrap()]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["passed"], true);
}

#[test]
fn rate_scan_is_written() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("rate", &configs().join("lp2_localized.json"), tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(tmp.path().join("rate_scan.csv")).unwrap();
    assert!(csv.lines().next().unwrap().starts_with("v_1,v_2,value"));
    assert!(csv.lines().count() > 2);
}

#[test]
fn bad_configs_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    fs::write(&path, SMALL_SAMPLE.replace("\"seed\"", "\"sed\"")).unwrap();
    let o = run("sample", &path, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sed"));
    let o = run("sample", &tmp.path().join("missing.json"), &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    fs::write(&path, SMALL_SAMPLE.replace("\"n_list\": [8, 16]", "\"n_list\": []")).unwrap();
    assert_eq!(run("sample", &path, &tmp.path().join("out")).status.code(), Some(1));
}

#[test]
fn numerical_failures_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("inadmissible.json");
    fs::write(&path, SMALL_SAMPLE.replace("\"1.5\"", "\"0.5\"")).unwrap();
    let o = run("sample", &path, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sample_runs_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("small.json");
    fs::write(&path, SMALL_SAMPLE).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = run("sample", &path, dir);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut names: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "timing.log")
        .collect();
    names.sort();
    assert!(names.contains(&"diagnostics.csv".to_string()));
    assert!(names.contains(&"samples_n8_delta0.1.csv".to_string()));
    for name in &names {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    // A different seed changes the samples.
    let c = tmp.path().join("c");
    let o = microcanon(&["sample", "--config", path.to_str().unwrap(), "--out", c.to_str().unwrap(), "--seed", "6"]);
    assert!(o.status.success());
    assert_ne!(
        fs::read(a.join("samples_n8_delta0.1.csv")).unwrap(),
        fs::read(c.join("samples_n8_delta0.1.csv")).unwrap()
    );
}
