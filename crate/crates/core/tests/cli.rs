use std::path::Path;
use std::process::{Command, Output};

use boo_core::datagen::read_stream_csv;
use boo_core::harness::emit::{read_csv, read_json};

fn boo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boo")).args(args).output().expect("spawning boo")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("cfg.toml");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const SMALL: &str = r#"
model = "logistic"
p = 3
n = 400
seed = 11
repetitions = 4
initial_offset = 1.0
checkpoints = [100, 400]
"#;

#[test]
fn t0_subcommand() {
    let out = boo(&["t0", "--p", "10"]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "29\n");
    let out = boo(&["t0", "--p", "10", "--m", "0.5"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "15\n");
    assert_eq!(code(&boo(&["t0", "--p", "0"])), 1);
}

#[test]
fn run_is_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let mut texts = Vec::new();
    for (name, threads) in [("a.json", "1"), ("b.json", "1"), ("c.json", "3")] {
        let out_path = dir.path().join(name);
        let out = boo(&["run", "--config", &cfg, "--format", "json", "--threads", threads, "--out", out_path.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        texts.push(std::fs::read(&out_path).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
    assert_eq!(texts[0], texts[2]);

    let result = read_json(&dir.path().join("a.json")).unwrap();
    assert_eq!(result.metadata.repetitions, 4);
    assert_eq!(result.metadata.checkpoints, vec![100, 400]);
    assert!(result.final_error("boo_t0_9").is_some());
}

#[test]
fn run_csv_to_stdout_matches_file_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let stdout = boo(&["run", "--config", &cfg, "--reps", "2"]);
    assert_eq!(code(&stdout), 0);
    let file = dir.path().join("r.csv");
    assert_eq!(code(&boo(&["run", "--config", &cfg, "--reps", "2", "--out", file.to_str().unwrap()])), 0);
    assert_eq!(stdout.stdout, std::fs::read(&file).unwrap());
    let text = String::from_utf8(stdout.stdout).unwrap();
    assert!(text.starts_with("estimator,t,metric,value,rep_count\n"));
    assert!(!text.contains('\r'));
    let rows = read_csv(&file).unwrap();
    assert!(rows.iter().all(|r| r.rep_count <= 2));
}

#[test]
fn seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = boo(&["run", "--config", &cfg, "--reps", "2", "--seed", "1"]);
    let b = boo(&["run", "--config", &cfg, "--reps", "2", "--seed", "2"]);
    assert_eq!((code(&a), code(&b)), (0, 0));
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn simulate_writes_one_stream_per_repetition() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("streams");
    let out = boo(&["simulate", "--config", &cfg, "--reps", "2", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let first = out_dir.join("stream_0000.csv");
    let obs = read_stream_csv(&first).unwrap();
    assert_eq!(obs.len(), 400);
    assert_eq!(obs[0].dim(), 3);
    assert!(out_dir.join("stream_0001.csv").exists());
    let header = std::fs::read_to_string(&first).unwrap();
    assert!(header.starts_with("y,x_1,x_2,x_3\n"));

    let again = dir.path().join("again");
    boo(&["simulate", "--config", &cfg, "--reps", "1", "--out", again.to_str().unwrap()]);
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(again.join("stream_0000.csv")).unwrap());
}

#[test]
fn sweep_prefixes_the_sweep_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMALL}estimators = [{{kind = \"boo\"}}]\n"));
    let out = boo(&["sweep", "--config", &cfg, "--reps", "2", "--m", "0.5,1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("sweep_value,estimator,t,metric,value,rep_count\n"));
    assert!(text.contains("\n0.5,boo_t0_5,"));
    assert!(text.contains("\n1,boo_t0_9,"));

    assert_eq!(code(&boo(&["sweep", "--config", &cfg])), 1);
    assert_eq!(code(&boo(&["sweep", "--config", &cfg, "--m", "1", "--offset", "1"])), 1);
}

#[test]
fn check_reports_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("check.json");
    let out = boo(&["check", "--n", "600", "--out", path.to_str().unwrap()]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    for key in ["recursion", "elliptic", "dyadic", "regularity"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&boo(&["run", "--config", "/nonexistent/cfg.toml"])), 1);

    let bad = write_config(dir.path(), "model = \"probit\"\np = 2\nn = 10\n");
    let out = boo(&["run", "--config", &bad]);
    assert_eq!(code(&out), 1);
    assert!(!out.stderr.is_empty());

    let unknown = write_config(dir.path(), "model = \"logistic\"\np = 2\nn = 10\nbogus = 1\n");
    assert_eq!(code(&boo(&["run", "--config", &unknown])), 1);
    assert_eq!(code(&boo(&["run", "--config", &unknown, "--format", "xml"])), 1);
    assert_eq!(code(&boo(&["frobnicate"])), 1);
    assert_eq!(code(&boo(&["--help"])), 0);
}

#[test]
fn numerical_failure_exits_2() {
    // Rates near e³⁰ break the SGD family in every repetition.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "model = \"poisson\"\np = 2\nn = 50\nrepetitions = 2\ntheta_star = [30.0, 30.0]\ninitial_offset = 1.0\n",
    );
    let out = boo(&["run", "--config", &cfg]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\nsgd,50,failures,2,2\n"), "{text}");
}
