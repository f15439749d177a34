use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bohm_lab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bohm-lab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&read(dir, name)).unwrap()
}

#[test]
fn census_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["vorticity-census", "--m", "2", "--n", "50", "--seed", "7"];
    let a = bohm_lab(dir.path(), &[&args[..], &["--out", "a/run"]].concat());
    let b = bohm_lab(dir.path(), &[&args[..], &["--out", "b/run", "--workers", "1"]].concat());
    assert!(a.status.success() && b.status.success());
    let csv = read(dir.path(), "a/run_census.csv");
    assert_eq!(csv, read(dir.path(), "b/run_census.csv"));
    assert_eq!(read(dir.path(), "a/run_manifest.json"), read(dir.path(), "b/run_manifest.json"));
    assert!(csv.starts_with("m,seed,vorticity_over_2pi,category\r\n"));
    assert_eq!(csv.lines().count(), 51);
    let summary = json(dir.path(), "a/run_summary.json");
    let total: f64 = summary["winding_fractions"].as_object().unwrap().values().map(|v| v.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    let manifest = json(dir.path(), "a/run_manifest.json");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert!(manifest["tolerances"]["circle_tol"].is_number());
}

#[test]
fn seed_changes_the_hash() {
    let dir = tempfile::tempdir().unwrap();
    for seed in ["1", "2"] {
        let out = bohm_lab(dir.path(), &["vorticity-census", "--n", "5", "--seed", seed, "--out", seed]);
        assert!(out.status.success());
    }
    assert_ne!(json(dir.path(), "1_manifest.json")["config_hash"], json(dir.path(), "2_manifest.json")["config_hash"]);
}

#[test]
fn missing_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bohm_lab(dir.path(), &["vorticity-census", "--n", "5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn flags_override_config_file_over_defaults() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"seed": 9, "n": 7, "out": "fromfile"}"#).unwrap();
    assert!(bohm_lab(dir.path(), &["vorticity-census", "--config", "c.json"]).status.success());
    assert_eq!(read(dir.path(), "fromfile_census.csv").lines().count(), 8);
    assert!(bohm_lab(dir.path(), &["vorticity-census", "--config", "c.json", "--n", "3", "--out", "flag"]).status.success());
    let m = json(dir.path(), "flag_manifest.json");
    assert_eq!(m["config"]["n"], 3);
    assert_eq!(m["config"]["m"], 2);
    assert_eq!(m["seed"], 9);
}

#[test]
fn bad_configs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"seed": 9, "bogus": 1}"#).unwrap();
    let cases: [&[&str]; 4] = [
        &["vorticity-census", "--config", "c.json"],
        &["vorticity-census", "--config", "missing.json", "--seed", "1"],
        &["spectral-line", "--seed", "1", "--T", "5000"],
        &["drift-field", "--seed", "1", "--state", "nowhere.json"],
    ];
    for args in cases {
        assert_eq!(bohm_lab(dir.path(), args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn lost_tracking_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = bohm_lab(
        dir.path(),
        &["find-nodes", "--m", "3", "--seed", "5", "--until", "6.3", "--dt", "3", "--grid", "24"],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tracking lost"));
}

#[test]
fn drift_field_from_state_file() {
    let dir = tempfile::tempdir().unwrap();
    let s = 0.5f64.sqrt();
    std::fs::write(
        dir.path().join("s.json"),
        format!(r#"{{"basis": "cartesian", "m": 1, "coeffs": [[0, 0, {s}, 0.0], [1, 0, 0.5, 0.0], [0, 1, 0.0, 0.5]]}}"#),
    )
    .unwrap();
    let out = bohm_lab(dir.path(), &["drift-field", "--state", "s.json", "--grid", "8", "--seed", "1", "--out", "df"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["df_angular.csv", "df_radial.csv"] {
        assert_eq!(read(dir.path(), name).lines().count(), 65);
    }
    let c = json(dir.path(), "df_classification.json");
    assert_eq!(c["classification"]["kind"], "type0");
    let m = json(dir.path(), "df_manifest.json");
    assert_eq!(m["inputs"][0]["file"], "s.json");
    assert!(m["tolerances"]["integrator"]["tolerances"]["rtol"].is_number());
}

#[test]
fn spectral_line_ignores_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["spectral-line", "--seed", "3", "--n", "300", "--T", "2", "--bins", "20"];
    assert!(bohm_lab(dir.path(), &[&base[..], &["--workers", "1", "--out", "one"]].concat()).status.success());
    assert!(bohm_lab(dir.path(), &[&base[..], &["--workers", "3", "--out", "three"]].concat()).status.success());
    assert_eq!(read(dir.path(), "one_histogram.csv"), read(dir.path(), "three_histogram.csv"));
    let s = json(dir.path(), "one_summary.json");
    assert!(s["std"].as_f64().unwrap() > 0.0);
    assert_eq!(read(dir.path(), "one_histogram.csv").lines().count(), 21);
}

#[test]
fn entropy_check_reports_permutations() {
    let dir = tempfile::tempdir().unwrap();
    let out = bohm_lab(dir.path(), &["entropy-check", "--seed", "4", "--n", "6", "--out", "p"]);
    assert!(out.status.success());
    let s = json(dir.path(), "p_summary.json");
    assert_eq!(s["is_permutation"], true);
    assert_eq!(s["entropy_conserving"], true);
    std::fs::write(dir.path().join("t.json"), "[[0.5, 0.5], [0.5, 0.5]]").unwrap();
    let out = bohm_lab(dir.path(), &["entropy-check", "--seed", "4", "--kind", "file", "--matrix", "t.json", "--out", "f"]);
    assert!(out.status.success());
    assert_eq!(json(dir.path(), "f_summary.json")["entropy_conserving"], false);
}

#[test]
fn model_subcommands_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let runs: [(&[&str], &[&str]); 4] = [
        (&["decay", "--seed", "2", "--n", "200", "--out", "d"], &["d_joint.csv", "d_marginal_q1.csv", "d_marginal_q2.csv", "d_summary.json"]),
        (
            &["energy-measure", "--seed", "2", "--n", "100", "--measured", "one-particle", "--out", "e"],
            &["e_joint.csv", "e_pointer.csv", "e_summary.json"],
        ),
        (&["trajectories", "--seed", "2", "--n", "2", "--t-end", "1", "--out", "t"], &["t_trajectories.csv"]),
        (
            &["relax-density", "--seed", "1", "--grid", "32", "--coarse", "8", "--steps-per-period", "200", "--out", "r"],
            &["r_hbar.csv", "r_frame.bin", "r_frame.json"],
        ),
    ];
    for (args, files) in runs {
        let out = bohm_lab(dir.path(), args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        for f in files {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }
    assert!(read(dir.path(), "t_trajectories.csv").starts_with("trajectory,T,Qx,Qy\r\n"));
    assert_eq!(std::fs::metadata(dir.path().join("r_frame.bin")).unwrap().len(), 32 * 32 * 8);
    assert_eq!(read(dir.path(), "r_hbar.csv").lines().count(), 3);
}
