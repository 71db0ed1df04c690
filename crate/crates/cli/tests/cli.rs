use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_sepsis-drift");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path) {
    let cfg = dir.join("synth.toml");
    fs::write(&cfg, "seed = 5\nn_patients_per_bucket = 40\n").unwrap();
    let out = run(&["synth-gen", "--config", p(&cfg), "--out", p(&dir.join("tables"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn no_arguments_prints_usage_and_fails() {
    let out = run(&[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_flag_and_subcommand_are_user_errors() {
    assert_eq!(run(&["ingest", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn label_help_documents_config_keys() {
    let out = run(&["label", "--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for key in ["abx_window_h", "culture_window_h", "window_pre_h", "window_post_h", "delta", "[sofa_items]"] {
        assert!(text.contains(key), "missing {key}");
    }
}

#[test]
fn missing_input_fails_without_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("ingest");
    let out = run(&["ingest", "--tables", p(&dir.path().join("nope")), "--out", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    let leftovers = fs::read_dir(dir.path()).unwrap().count();
    assert!(!out_dir.exists() || fs::read_dir(&out_dir).unwrap().next().is_none());
    assert_eq!(leftovers, usize::from(out_dir.exists()));
}

#[test]
fn stages_refuse_to_overwrite_and_rerun_identically_with_force() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let tables = dir.path().join("tables");
    let ingest = dir.path().join("ingest");
    let labels = dir.path().join("label");
    let args_ingest = ["ingest", "--lab-join", "stay", "--tables", p(&tables), "--out", p(&ingest)];
    let first = run(&args_ingest);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let record: serde_json::Value = serde_json::from_slice(&first.stdout).unwrap();
    assert_eq!(record["stage"], "ingest");

    let cohort = fs::read(ingest.join("cohort.csv")).unwrap();
    let again = run(&args_ingest);
    assert_eq!(again.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));

    let mut forced = vec!["--force"];
    forced.extend(args_ingest);
    assert!(run(&forced).status.success());
    assert_eq!(fs::read(ingest.join("cohort.csv")).unwrap(), cohort);

    let label_args = ["label", "--ingest", p(&ingest), "--out", p(&labels)];
    assert!(run(&label_args).status.success());
    let first_labels = fs::read(labels.join("labels.csv")).unwrap();
    let mut forced = vec!["--force"];
    forced.extend(label_args);
    assert!(run(&forced).status.success());
    assert_eq!(fs::read(labels.join("labels.csv")).unwrap(), first_labels);
}

#[test]
fn train_and_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let d = |s: &str| dir.path().join(s);
    for args in [
        vec!["ingest", "--lab-join", "stay", "--tables", p(&d("tables")), "--out", p(&d("ingest"))],
        vec!["label", "--ingest", p(&d("ingest")), "--out", p(&d("label"))],
        vec![
            "extract-features",
            "--ingest",
            p(&d("ingest")),
            "--labels",
            p(&d("label")),
            "--feature-set",
            "dascena",
            "--out",
            p(&d("features")),
        ],
    ] {
        let out = run(&args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let features = d("features").join("features_dascena.bin");
    let cfg = d("train.toml");
    fs::write(&cfg, "max_epochs = 3\npatience = 2\n").unwrap();
    let out = run(&[
        "train",
        "--features",
        p(&features),
        "--model",
        "logistic",
        "--config",
        p(&cfg),
        "--out",
        p(&d("model")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&["evaluate", "--features", p(&features), "--model-dir", p(&d("model")), "--out", p(&d("eval"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let results = fs::read_to_string(d("eval").join("results.csv")).unwrap();
    assert!(results.lines().count() > 1);

    assert_eq!(run(&["train", "--features", p(&features), "--model", "svm", "--out", p(&d("x"))]).status.code(), Some(1));
    assert_eq!(
        run(&["train", "--features", p(&features), "--model", "rnn", "--split", "0.5,0.5", "--out", p(&d("x"))])
            .status
            .code(),
        Some(1)
    );
}
