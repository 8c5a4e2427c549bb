use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
seed = 7

[paths]
source_root = "corpus/src"
cve_labels = "corpus/cve_labels.csv"
workspace = "work"

[generate]
num_functions = 300
vuln_fraction = 0.05
signal_strength = 1.0
functions_per_file = 30

[bpe]
num_merges = 60

[lm]
dim = 8
epochs = 1
batch_size = 16
max_seq_len = 64

[model.gbm]
num_trees = 20
"#;

fn vulnrank(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vulnrank"))
        .args(args)
        .arg("--config")
        .arg(dir.join("vulnrank.toml"))
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn setup(config: &str) -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("vulnrank.toml"), config).unwrap();
    let out = vulnrank(dir.path(), &["generate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ws = dir.path().join("work");
    (dir, ws)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn extract_finds_every_generated_function() {
    let (dir, ws) = setup(SMALL);
    let out = vulnrank(dir.path(), &["extract"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "extract: done");
    let lines = fs::read_to_string(ws.join("functions.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 300);
    let again = vulnrank(dir.path(), &["extract"]);
    assert_eq!(stdout(&again).trim(), "extract: up to date");
}

#[test]
fn evaluate_before_train_names_the_missing_stage() {
    let (dir, _) = setup(SMALL);
    let out = vulnrank(dir.path(), &["evaluate"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("run stage extract first"), "{}", stderr(&out));
    for stage in ["extract", "bpe", "encode", "train-lm", "embed", "simrows", "features", "sample"] {
        let o = vulnrank(dir.path(), &[stage]);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    let out = vulnrank(dir.path(), &["evaluate"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("run stage train first"), "{}", stderr(&out));
}

#[test]
fn second_full_run_recomputes_nothing() {
    let (dir, ws) = setup(SMALL);
    let first = vulnrank(dir.path(), &["all"]);
    assert!(first.status.success(), "{}", stderr(&first));
    assert_eq!(stdout(&first).trim(), "all: 12 stage(s) ran");
    let report = fs::read(ws.join("report.md")).unwrap();
    let second = vulnrank(dir.path(), &["all"]);
    assert_eq!(stdout(&second).trim(), "all: 0 stage(s) ran");
    assert_eq!(fs::read(ws.join("report.md")).unwrap(), report);

    // a changed report option only reruns the report stage
    let cfg = fs::read_to_string(dir.path().join("vulnrank.toml")).unwrap();
    fs::write(dir.path().join("vulnrank.toml"), format!("{cfg}\n[report]\ntop_rows = 5\n")).unwrap();
    let refused = vulnrank(dir.path(), &["all"]);
    assert_eq!(refused.status.code(), Some(2));
    assert!(stderr(&refused).contains("--force"), "{}", stderr(&refused));
    let forced = vulnrank(dir.path(), &["all", "--force"]);
    assert_eq!(stdout(&forced).trim(), "all: 1 stage(s) ran");
}

#[test]
fn bad_config_and_bad_data_exit_codes() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("vulnrank.toml"), "seed = 1\n[lm]\nbogus = 3\n").unwrap();
    assert_eq!(vulnrank(dir.path(), &["extract"]).status.code(), Some(2));
    fs::write(dir.path().join("vulnrank.toml"), "[smote]\nsynth_percent = 150\n").unwrap();
    assert_eq!(vulnrank(dir.path(), &["extract"]).status.code(), Some(2));

    let (dir, _) = setup(SMALL);
    fs::write(dir.path().join("corpus/cve_labels.csv"), "wrong,header\n").unwrap();
    let out = vulnrank(dir.path(), &["extract"]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
}
