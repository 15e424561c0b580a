use std::fs;
use std::path::Path;
use std::process::Command;

use nfdist_cli::{bundled, execute, Experiment, RunError, RunOptions, Scenario, BUNDLED};

const SMALL: &str = r#"
name = "small"
experiment = "radiate"
seed = 21

[geometry]
m_y = 6
m_z = 6
wavelength = 0.1

[[users]]
azimuth_deg = -19.77
elevation_deg = 0.0
range_m = 3.0

[[users]]
azimuth_deg = 12.3
elevation_deg = 0.0
range_m = 5.0

[ofdm]
n_fft = 16
first = 1
last = 8

[radiate]
frames = 8
range_m = 4.0

[radiate.axis]
kind = "azimuth"
start = -60.0
stop = 60.0
step = 2.0

[radiate.axis2]
kind = "range"
start = 1.0
stop = 9.0
step = 2.0
"#;

fn small() -> Scenario {
    Scenario::from_toml(SMALL).unwrap()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nfdist"))
}

fn run_in(scenario: &Scenario, command: Option<Experiment>, dir: &Path, workers: usize) -> Result<(), RunError> {
    let opts = RunOptions {
        out: Some(dir.to_path_buf()),
        workers: Some(workers),
        ..Default::default()
    };
    execute(scenario, command, &opts).map(|_| ())
}

#[test]
fn every_bundled_scenario_round_trips() {
    for (name, text) in BUNDLED {
        let first = Scenario::from_toml(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(first.name, *name);
        let second = Scenario::from_toml(&first.to_toml()).unwrap_or_else(|e| panic!("{name} reparse: {e}"));
        assert_eq!(first, second, "{name}");
    }
}

#[test]
fn bundled_list_matches_the_scenario_directory() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut on_disk: Vec<String> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .map(|p| p.file_stem().unwrap().to_string_lossy().into_owned())
        .collect();
    on_disk.sort();
    let mut listed: Vec<String> = BUNDLED.iter().map(|(n, _)| n.to_string()).collect();
    listed.sort();
    assert_eq!(on_disk, listed);
    assert_eq!(
        bundled("fig5a").unwrap(),
        fs::read_to_string(dir.join("fig5a.toml")).unwrap()
    );
}

#[test]
fn zero_rows_names_geometry_m_y() {
    let text = bundled("fig5a").unwrap().replace("m_y = 35", "m_y = 0");
    let err = Scenario::from_toml(&text).unwrap_err();
    assert_eq!(err.path, "geometry.m_y");
}

#[test]
fn schema_errors_carry_the_field_path() {
    let cases = [
        (SMALL.replace("frames = 8", "frames = -8"), "radiate.frames"),
        (SMALL.replace("frames = 8", "framez = 8"), "radiate.framez"),
        (SMALL.replace("wavelength = 0.1", "wavelength = \"short\""), "geometry.wavelength"),
        (SMALL.replace("seed = 21\n", ""), ""),
        (SMALL.replace("[radiate]", "[radiate.extra]\n[radiate]"), "radiate.extra"),
        (SMALL.replace("last = 8", "last = 16"), "ofdm.occupied"),
        (SMALL.replace("step = 2.0\n", "step = 0.0\n"), "radiate.axis"),
    ];
    for (text, path) in cases {
        let err = Scenario::from_toml(&text).unwrap_err();
        assert!(err.path.starts_with(path), "expected `{path}`, got `{}`: {}", err.path, err.message);
    }
}

#[test]
fn missing_experiment_section_is_a_config_error() {
    let s = small();
    let dir = tempfile::tempdir().unwrap();
    let err = run_in(&s, Some(Experiment::Rates), dir.path(), 1).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(matches!(err, RunError::Config { ref path, .. } if path == "rates"));
}

#[test]
fn radiate_is_byte_identical_across_runs_and_workers() {
    let s = small();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_in(&s, None, a.path(), 1).unwrap();
    run_in(&s, None, b.path(), 3).unwrap();
    for f in ["field.csv", "field.json", "manifest.json"] {
        let x = fs::read(a.path().join(f)).unwrap();
        let y = fs::read(b.path().join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f}");
    }
}

#[test]
fn schedule_is_byte_identical_across_workers() {
    let mut s = Scenario::from_toml(bundled("fig8").unwrap()).unwrap();
    s.schedule.as_mut().unwrap().realizations = 3;
    s.schedule.as_mut().unwrap().snr_db = vec![0.0, 25.0];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_in(&s, None, a.path(), 1).unwrap();
    run_in(&s, None, b.path(), 2).unwrap();
    for f in ["schedule.csv", "gains.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_override_changes_the_periodogram_and_the_hash() {
    let s = small();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_in(&s, None, a.path(), 1).unwrap();
    let opts = RunOptions {
        out: Some(b.path().to_path_buf()),
        seed: Some(22),
        ..Default::default()
    };
    execute(&s, None, &opts).unwrap();
    assert_ne!(
        fs::read(a.path().join("field.csv")).unwrap(),
        fs::read(b.path().join("field.csv")).unwrap()
    );
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(b.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 22);
    let other: serde_json::Value =
        serde_json::from_slice(&fs::read(a.path().join("manifest.json")).unwrap()).unwrap();
    assert_ne!(manifest["config_sha256"], other["config_sha256"]);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn grid_flag_sets_the_angular_step() {
    let s = small();
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        out: Some(dir.path().to_path_buf()),
        grid_deg: Some(10.0),
        workers: Some(1),
        ..Default::default()
    };
    execute(&s, None, &opts).unwrap();
    let side: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("field.json")).unwrap()).unwrap();
    assert_eq!(side["axis1_values"].as_array().unwrap().len(), 13);
    // range axis keeps its own step
    assert_eq!(side["axis2_values"].as_array().unwrap().len(), 5);
}

#[test]
fn predict_writes_focal_json() {
    let dir = tempfile::tempdir().unwrap();
    let s = Scenario::from_toml(bundled("fig5a").unwrap()).unwrap();
    run_in(&s, Some(Experiment::Predict), dir.path(), 1).unwrap();
    let out: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("focal_points.json")).unwrap()).unwrap();
    assert_eq!(out["points"].as_array().unwrap().len(), 27);
    assert_eq!(out["unique"].as_array().unwrap().len(), 12);
    let p = out["unique"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["tuple"] == serde_json::json!([0, 1, 2]))
        .unwrap();
    assert!((p["azimuth_deg"].as_f64().unwrap() - (-5.339)).abs() < 1e-3);
}

#[test]
fn calibrate_reproduces_evm3() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Scenario::from_toml(bundled("calibrate-evm3").unwrap()).unwrap();
    s.calibrate.as_mut().unwrap().samples = 200_000;
    run_in(&s, None, dir.path(), 1).unwrap();
    let out: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("pa.json")).unwrap()).unwrap();
    assert!((out["coeffs"][0][0].as_f64().unwrap() - 1.042).abs() < 5e-4);
    assert!((out["coeffs"][1][0].as_f64().unwrap() + 0.0212).abs() < 5e-5);
    assert_eq!(out["convention"], "amplitude");
}

#[test]
fn binary_reports_schema_errors_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, bundled("fig5a").unwrap().replace("m_y = 35", "m_y = 0")).unwrap();
    let out = bin().args(["predict", "--scenario"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("geometry.m_y"));
}

#[test]
fn binary_exit_two_on_numerical_failure() {
    // co-located users make the zero-forcing Gram matrix singular
    let text = SMALL
        .replace("azimuth_deg = 12.3", "azimuth_deg = -19.77")
        .replace("range_m = 5.0", "range_m = 3.0")
        .replace("experiment = \"radiate\"", "experiment = \"rates\"\nprecoder = \"zf\"")
        + "\n[rates]\nprecoders = [\"zf\"]\nevms = [0.0]\nsnr_db = [10.0]\n";
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("zf.toml");
    fs::write(&path, text).unwrap();
    let out = bin()
        .args(["rates", "--scenario"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = fs::read_to_string(dir.path().join("out/manifest.json")).unwrap();
    assert!(manifest.contains("\"status\": \"error\""));
}

#[test]
fn binary_exit_three_on_validation_mismatch() {
    // off-grid users and a tolerance below the grid step cannot match
    let text = SMALL.to_string() + "\n[validate]\nangle_tolerance_deg = 0.01\n";
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.toml");
    fs::write(&path, text).unwrap();
    let out = bin()
        .args(["validate", "--workers", "1", "--scenario"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let out_dir = dir.path().join("out");
    for f in ["validation.json", "focal_points.json", "field.csv", "manifest.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let manifest = fs::read_to_string(out_dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"status\": \"mismatch\""));
}

#[test]
fn binary_runs_bundled_scenarios_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["predict", "--scenario", "fig7b", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("focal_points.json").exists());
    let list = bin().arg("scenarios").output().unwrap();
    assert!(String::from_utf8_lossy(&list.stdout).lines().any(|l| l == "fig8"));
}
