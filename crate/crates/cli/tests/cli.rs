//! End-to-end tests of the `tsak` binary: the staged quickstart flow,
//! usage-error exit codes, grid flag parsing, and byte-level rerun
//! reproducibility, all on a deliberately tiny synthetic config.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tsak() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tsak"))
}

/// Tiny but complete experiment: 2 users x 2 sessions x 30 s, two epochs
/// per stage, one fold.
const TINY_CONFIG: &str = r#"{
  "seed": 7,
  "synth": { "num_users": 2, "sessions_per_user": 2, "session_seconds": 30.0 },
  "scheme": "loso",
  "fold_limit": 1,
  "stages": {
    "teacher": { "epochs": 2, "patience": 2, "batch_size": 32 },
    "semantic": { "epochs": 2, "patience": 2, "batch_size": 32 },
    "student": { "epochs": 2, "patience": 2, "batch_size": 32 },
    "val_fraction": 0.2
  },
  "grid": { "strategies": ["baseline", "combirep"], "alphas": [0.5], "taus": [4.0] }
}"#;

struct Workspace {
    _dir: tempfile::TempDir,
    config: PathBuf,
    run_root: PathBuf,
}

impl Workspace {
    fn new() -> Workspace {
        let dir = tempfile::tempdir().expect("tempdir");
        let config = dir.path().join("config.json");
        std::fs::write(&config, TINY_CONFIG).expect("write config");
        let run_root = dir.path().join("runs");
        Workspace {
            _dir: dir,
            config,
            run_root,
        }
    }

    fn cmd(&self, args: &[&str]) -> Output {
        tsak()
            .arg("--config")
            .arg(&self.config)
            .arg("--run-root")
            .arg(&self.run_root)
            .args(args)
            .output()
            .expect("spawn tsak")
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.cmd(args);
        assert!(
            out.status.success(),
            "tsak {args:?} failed:\nstdout: {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8_lossy(&out.stdout).into_owned()
    }

    /// The single run directory created under the root.
    fn run_dir(&self) -> PathBuf {
        let mut dirs: Vec<PathBuf> = std::fs::read_dir(&self.run_root)
            .expect("run root exists")
            .map(|e| e.expect("dir entry").path())
            .collect();
        dirs.sort();
        assert_eq!(dirs.len(), 1, "expected one run dir, got {dirs:?}");
        dirs.remove(0)
    }
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn staged_quickstart_completes_end_to_end() {
    let ws = Workspace::new();
    ws.ok(&["synth"]);
    ws.ok(&["preprocess"]);
    ws.ok(&["train-teacher"]);
    ws.ok(&["train-sc"]);
    ws.ok(&["distill", "--strategy", "sclogit", "--alpha", "0.99", "--tau", "4"]);
    ws.ok(&["export", "--strategy", "sclogit", "--alpha", "0.99", "--tau", "4"]);
    ws.ok(&["infer", "--sample", "5"]);

    let dir = ws.run_dir();
    for artifact in [
        "dataset.tsakc",
        "teacher_fold0.json",
        "semantic_fold0.json",
        "student_fold0_sclogit_a0.99_t4.json",
        "student.tsak",
        "predictions.csv",
        "sample_windows.csv",
        "manifest.json",
    ] {
        assert!(dir.join(artifact).exists(), "missing {artifact}");
    }

    // The distill report must show untouched supervisor weights, matching
    // the hashes recorded by the stages that trained them.
    let report: serde_json::Value = serde_json::from_str(&read(
        &dir.join("student_fold0_sclogit_a0.99_t4_report.json"),
    ))
    .expect("report parses");
    assert_eq!(report["kd_active"], serde_json::Value::Bool(true));
    assert_eq!(report["teacher_hash_before"], report["teacher_hash_after"]);
    assert_eq!(report["semantic_hash_before"], report["semantic_hash_after"]);
    let teacher_report: serde_json::Value =
        serde_json::from_str(&read(&dir.join("teacher_fold0_report.json"))).expect("parses");
    assert_eq!(report["teacher_hash_before"], teacher_report["param_hash"]);

    // The bundle stays within the deployability budget.
    let bundle = std::fs::metadata(dir.join("student.tsak")).expect("bundle");
    assert!(bundle.len() < 16 * 1024, "bundle is {} bytes", bundle.len());

    // predictions.csv has one data row per sampled window.
    let predictions = read(&dir.join("predictions.csv"));
    assert_eq!(predictions.lines().count(), 1 + 5);
    assert!(predictions.starts_with("id,predicted_id,predicted_class,p0,p1,p2,p3,true_id"));
}

#[test]
fn staging_preconditions_and_usage_errors_exit_nonzero() {
    let ws = Workspace::new();
    ws.ok(&["synth"]);
    ws.ok(&["preprocess"]);
    ws.ok(&["train-teacher"]);

    // Distilling an SC strategy without the semantic stage is a config
    // error that names the missing command.
    let out = ws.cmd(&["distill", "--strategy", "sclogit"]);
    assert_eq!(out.status.code(), Some(2), "config errors exit with 2");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("train-sc"), "stderr: {stderr}");

    // Unknown strategy: usage error listing the valid set.
    let out = ws.cmd(&["sweep", "--strategies", "baseline,frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("sclogit") && stderr.contains("combirep"),
        "the valid set should be listed: {stderr}"
    );

    // Unknown scheme: same treatment.
    let out = ws.cmd(&["evaluate", "--scheme", "kfold"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("loso") && stderr.contains("louo"), "stderr: {stderr}");

    // Evaluating before preprocess in a fresh root points at the missing
    // stage rather than failing with a raw IO error.
    let fresh = Workspace::new();
    let out = fresh.cmd(&["train-teacher"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("preprocess"), "stderr: {stderr}");
}

#[test]
fn sweep_grid_flags_control_ablation_cardinality() {
    let ws = Workspace::new();
    ws.ok(&["synth"]);
    ws.ok(&["preprocess"]);
    // Two logit strategies x one alpha x three taus = 6 cells.
    ws.ok(&[
        "sweep",
        "--strategies",
        "sclogit,logit",
        "--alphas",
        "0.99",
        "--taus",
        "1,4,20",
    ]);
    let dir = ws.run_dir();
    let ablation = read(&dir.join("ablation.csv"));
    assert_eq!(
        ablation.lines().count(),
        1 + 6,
        "expected a header and six data rows:\n{ablation}"
    );
    assert!(ablation.starts_with("strategy,alpha,tau,fold,precision,recall,f1"));
    // One fold evaluated, so each cell appears exactly once.
    for needle in [
        "\nsclogit,0.990000,1.000000,0,",
        "\nsclogit,0.990000,4.000000,0,",
        "\nsclogit,0.990000,20.000000,0,",
        "\nlogit,0.990000,1.000000,0,",
        "\nlogit,0.990000,4.000000,0,",
        "\nlogit,0.990000,20.000000,0,",
    ] {
        assert!(ablation.contains(needle), "missing {needle:?} in:\n{ablation}");
    }
    // Teacher rows live in their own table.
    let teacher = read(&dir.join("teacher.csv"));
    assert_eq!(teacher.lines().count(), 1 + 1);
    assert!(teacher.lines().nth(1).unwrap().starts_with("teacher,"));
}

#[test]
fn reruns_reproduce_tables_byte_for_byte() {
    let first = Workspace::new();
    first.ok(&["synth"]);
    first.ok(&["preprocess"]);
    first.ok(&["sweep"]);

    let second = Workspace::new();
    second.ok(&["synth"]);
    second.ok(&["preprocess"]);
    second.ok(&["sweep"]);

    for table in ["ablation.csv", "teacher.csv", "summary.csv", "confusion.csv"] {
        let a = read(&first.run_dir().join(table));
        let b = read(&second.run_dir().join(table));
        assert_eq!(a, b, "{table} differs between identical reruns");
    }
}

#[test]
fn run_root_env_var_is_honored() {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = dir.path().join("config.json");
    std::fs::write(&config, TINY_CONFIG).expect("write config");
    let root = dir.path().join("from-env");
    let out = tsak()
        .arg("--config")
        .arg(&config)
        .arg("synth")
        .env("TSAK_RUN_ROOT", &root)
        .output()
        .expect("spawn tsak");
    assert!(out.status.success());
    assert!(root.exists(), "TSAK_RUN_ROOT should place runs under it");
}
