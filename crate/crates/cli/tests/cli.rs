//! End-to-end tests of the `pairview` binary: exit codes, artifact files,
//! determinism, and the golden-file flow.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn pairview(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pairview"))
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process should exit normally")
}

/// A benchmark small enough that every subcommand finishes in well under a
/// second: 6x3 grid, 3 classes, one test object per class, one seed.
fn write_tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.json");
    fs::write(
        &path,
        r#"{
            "grid": {"azimuth_steps": 6, "elevation_steps": 3},
            "world": {
                "num_classes": 3,
                "feature_dim": 4,
                "noise_sigma": 0.8,
                "ambiguity": {"kind": "constant", "value": 0.5},
                "view_correlation_length": 0.0
            },
            "train_objects_per_class": 4,
            "test_objects_per_class": 1,
            "lengths": [2, 4],
            "seeds": [11],
            "weight_samples": 8,
            "quality_samples": 2
        }"#,
    )
    .expect("config should be writable");
    path
}

/// A score table over a 4x3 grid: 2 classes, 2 objects, the true class 3.0
/// ahead of the rest at every view.
fn write_score_table(dir: &Path) -> PathBuf {
    let path = dir.join("scores.csv");
    let mut text = String::from("object_id,true_class,azimuth,elevation,s0,s1\n");
    for object in 0..2 {
        for az in 0..4 {
            for el in 0..3 {
                let (s0, s1) = if object == 0 { (3.0, 0.0) } else { (0.0, 3.0) };
                text.push_str(&format!("{object},{object},{az},{el},{s0},{s1}\n"));
            }
        }
    }
    fs::write(&path, text).expect("score table should be writable");
    path
}

fn write_scores_config(dir: &Path) -> PathBuf {
    let path = dir.join("scores_config.json");
    fs::write(
        &path,
        r#"{
            "grid": {"azimuth_steps": 4, "elevation_steps": 3},
            "lengths": [2],
            "strategies": ["random"],
            "seeds": [11],
            "weight_samples": 4
        }"#,
    )
    .expect("config should be writable");
    path
}

#[test]
fn help_exits_zero() {
    let out = pairview(&["--help"]);
    assert_eq!(exit_code(&out), 0);
}

#[test]
fn bench_writes_result_files_deterministically() {
    let dir = TempDir::new().unwrap();
    let config = write_tiny_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));

    for out_dir in [&a, &b] {
        let out = pairview(&[
            "bench",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_of(&out));
    }
    for name in ["results.csv", "results_aggregate.csv", "results.md"] {
        let first = fs::read(a.join(name)).expect("artifact should exist");
        let second = fs::read(b.join(name)).expect("artifact should exist");
        assert_eq!(first, second, "{name} should be byte-identical across runs");
    }
}

#[test]
fn rejects_unknown_config_field() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("bad.json");
    fs::write(&config, r#"{"no_such_field": 1}"#).unwrap();
    let out = pairview(&["bench", "--config", config.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 1);
    assert!(stderr_of(&out).contains("error:"));
}

#[test]
fn rejects_invalid_beta() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("bad.json");
    fs::write(&config, r#"{"beta": 0.0}"#).unwrap();
    let out = pairview(&["bench", "--config", config.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 1);
    assert!(stderr_of(&out).contains("beta"));
}

#[test]
fn missing_scores_file_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let config = write_scores_config(dir.path());
    let out = pairview(&[
        "bench",
        "--config",
        config.to_str().unwrap(),
        "--scores",
        dir.path().join("absent.csv").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn malformed_scores_file_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let config = write_scores_config(dir.path());
    let scores = dir.path().join("mangled.csv");
    fs::write(&scores, "object,klass,azimuth\n0,0,0\n").unwrap();
    let out = pairview(&[
        "bench",
        "--config",
        config.to_str().unwrap(),
        "--scores",
        scores.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);
    assert!(stderr_of(&out).contains("score"));
}

#[test]
fn scores_bench_reaches_full_accuracy_on_a_separable_table() {
    let dir = TempDir::new().unwrap();
    let config = write_scores_config(dir.path());
    let scores = write_score_table(dir.path());
    let out = pairview(&[
        "bench",
        "--config",
        config.to_str().unwrap(),
        "--scores",
        scores.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_of(&out));
    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let row = csv.lines().nth(1).expect("one result row");
    assert!(row.ends_with("1.000000"), "row: {row}");
}

#[test]
fn scores_bench_rejects_policy_strategies() {
    let dir = TempDir::new().unwrap();
    let config = write_scores_config(dir.path());
    let scores = write_score_table(dir.path());
    let out = pairview(&[
        "bench",
        "--config",
        config.to_str().unwrap(),
        "--scores",
        scores.to_str().unwrap(),
        "--strategies",
        "nbv_global",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 1);
    assert!(stderr_of(&out).contains("score-table"));
}

#[test]
fn golden_flow_matches_then_catches_corruption() {
    let dir = TempDir::new().unwrap();
    let config = write_tiny_config(dir.path());
    let out_dir = dir.path().join("out");
    let out = pairview(&[
        "bench",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_of(&out));

    let golden = dir.path().join("golden.csv");
    fs::copy(out_dir.join("results_aggregate.csv"), &golden).unwrap();
    let out = pairview(&[
        "check-golden",
        golden.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_of(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("golden match"));

    let mut text = fs::read_to_string(&golden).unwrap();
    text = text.replacen("random", "rambling", 1);
    fs::write(&golden, text).unwrap();
    let out = pairview(&[
        "check-golden",
        golden.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 3);
    assert!(stderr_of(&out).contains("differ from golden file"));
}

#[test]
fn committed_golden_matches_the_default_benchmark() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../golden/default_results_aggregate.csv");
    let dir = TempDir::new().unwrap();
    let out = pairview(&[
        "check-golden",
        golden.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_of(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("golden match"));
}

#[test]
fn gen_world_emits_signature_artifacts() {
    let dir = TempDir::new().unwrap();
    let config = write_tiny_config(dir.path());
    let out = pairview(&[
        "gen-world",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_of(&out));

    let world: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("world.json")).unwrap())
            .expect("world.json should parse");
    assert_eq!(world["master_seed"], 11);
    // 6x3 grid: one ambiguity row per view, one signature row per (class, view).
    let ambiguity = fs::read_to_string(dir.path().join("ambiguity.csv")).unwrap();
    assert_eq!(ambiguity.lines().count(), 1 + 18);
    let signatures = fs::read_to_string(dir.path().join("signatures.csv")).unwrap();
    assert_eq!(signatures.lines().count(), 1 + 3 * 18);
}

#[test]
fn learn_weights_and_fit_policies_emit_tables() {
    let dir = TempDir::new().unwrap();
    let config = write_tiny_config(dir.path());
    let out = pairview(&[
        "learn-weights",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_of(&out));
    let weights = fs::read_to_string(dir.path().join("weights.csv")).unwrap();
    assert!(weights.starts_with("d_azimuth,d_elevation,mean_cross_entropy,lambda"));
    assert!(weights.lines().count() > 1);

    let out = pairview(&[
        "fit-policies",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_of(&out));
    assert!(dir.path().join("nbv_policy.csv").exists());
    assert!(dir.path().join("quality.csv").exists());
}

#[test]
fn strategy_length_and_seed_overrides_shape_the_rows() {
    let dir = TempDir::new().unwrap();
    let config = write_tiny_config(dir.path());
    let out = pairview(&[
        "bench",
        "--config",
        config.to_str().unwrap(),
        "--strategies",
        "random,straight",
        "--lengths",
        "3",
        "--seed",
        "7",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_of(&out));
    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert!(matches!(fields[0], "random" | "straight"));
        assert_eq!(fields[2], "3");
        assert_eq!(fields[3], "7");
    }
}

#[test]
fn ablation_and_curve_emit_their_tables() {
    let dir = TempDir::new().unwrap();
    let config = write_tiny_config(dir.path());
    for (cmd, stem) in [("ablation", "ablation"), ("curve", "curves")] {
        let out = pairview(&[
            cmd,
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_of(&out));
        for suffix in [".csv", "_aggregate.csv", ".md"] {
            assert!(
                dir.path().join(format!("{stem}{suffix}")).exists(),
                "{stem}{suffix} should exist"
            );
        }
    }
}
