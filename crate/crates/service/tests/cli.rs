mod common;

use serde_json::Value;
use speaklabel_core::synth::{replay_corpus, round_fixture, WriteOptions, WrittenCorpus};
use std::path::Path;
use std::process::{Command, Output};

fn speaklabel(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_speaklabel"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SPEAKLABEL_CONFIG")
        .output()
        .unwrap()
}

fn with_fixtures<'a>(args: &[&'a str], owned: &'a [String]) -> Vec<&'a str> {
    args.iter().copied().chain(owned.iter().map(String::as_str)).collect()
}

fn fixture_flags() -> Vec<String> {
    vec![
        "--vocab".into(),
        common::coco_path().display().to_string(),
        "--embeddings".into(),
        common::embeddings_path().display().to_string(),
    ]
}

fn corpus(dir: &Path, images: usize) -> WrittenCorpus {
    let coco = common::coco();
    replay_corpus(&coco, images).write(dir, &coco, &WriteOptions::default()).unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "exit {}: {}", out.status, String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn process_writes_labelings_unless_told_not_to() {
    let tmp = tempfile::tempdir().unwrap();
    let c = corpus(tmp.path(), 6);
    let store = c.store.display().to_string();
    let flags = fixture_flags();

    let out = speaklabel(&with_fixtures(&["process", "--store", &store, "--no-write"], &flags), tmp.path());
    assert_eq!(stdout_json(&out)["processed"], 6);
    assert!(!c.store.join("ann1/img000/labeling.json").exists());

    let out = speaklabel(&with_fixtures(&["process", "--store", &store], &flags), tmp.path());
    let summary = stdout_json(&out);
    assert_eq!(summary["failures"], serde_json::json!([]));
    let labeling: Value =
        serde_json::from_slice(&std::fs::read(c.store.join("ann1/img000/labeling.json")).unwrap()).unwrap();
    assert_eq!(labeling["labels"][0]["class"], "person");
    assert!(c.store.join("ann2/img001/annotations.json").is_file());
}

#[test]
fn phrase_hints_switch_changes_transcriptions() {
    let tmp = tempfile::tempdir().unwrap();
    // img005 names its first class by a variant when hints are on
    let c = corpus(tmp.path(), 6);
    let store = c.store.display().to_string();
    let flags = fixture_flags();
    let read = || -> Value {
        serde_json::from_slice(&std::fs::read(c.store.join("ann1/img005/annotations.json")).unwrap()).unwrap()
    };
    stdout_json(&speaklabel(&with_fixtures(&["process", "--store", &store], &flags), tmp.path()));
    let hinted = read();
    stdout_json(&speaklabel(
        &with_fixtures(&["process", "--store", &store, "--no-phrase-hints"], &flags),
        tmp.path(),
    ));
    let plain = read();
    assert_ne!(
        hinted["annotations"][0]["transcription"]["alternatives"],
        plain["annotations"][0]["transcription"]["alternatives"]
    );
}

#[test]
fn evaluate_prints_report_and_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let c = corpus(tmp.path(), 10);
    let csv = tmp.path().join("per_image.csv");
    let (store, gt, csv_s) = (c.store.display().to_string(), c.gt.display().to_string(), csv.display().to_string());
    let flags = fixture_flags();
    let out = speaklabel(
        &with_fixtures(&["evaluate", "--store", &store, "--gt", &gt, "--per-image-csv", &csv_s], &flags),
        tmp.path(),
    );
    let report = stdout_json(&out);
    assert_eq!(report["images"], 10);
    assert_eq!(report["failures"], 0);
    assert!(report["precision"].as_f64().unwrap() > 0.8);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 11);
    assert!(text.lines().nth(1).unwrap().starts_with("img000"));
}

#[test]
fn grade_training_reports_rounds() {
    let tmp = tempfile::tempdir().unwrap();
    let coco = common::coco();
    let (log, gt) = round_fixture(&coco, 800).write(tmp.path(), &coco).unwrap();
    let (log, gt) = (log.display().to_string(), gt.display().to_string());
    let vocab = common::coco_path().display().to_string();
    let out = speaklabel(&["grade-training", "--log", &log, "--gt", &gt, "--vocab", &vocab], tmp.path());
    let v = stdout_json(&out);
    let round = &v["annotators"][0]["rounds"][0];
    assert_eq!(round["passed"], true);
    assert_eq!(round["recall"], 0.8);

    let out = speaklabel(
        &["grade-training", "--log", &log, "--gt", &gt, "--vocab", &vocab, "--min-recall", "0.81"],
        tmp.path(),
    );
    assert_eq!(stdout_json(&out)["annotators"][0]["rounds"][0]["passed"], false);
}

#[test]
fn validate_lists_broken_files_and_exits_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let c = corpus(tmp.path(), 3);
    let store = c.store.display().to_string();
    let vocab = common::coco_path().display().to_string();
    let emb = common::embeddings_path().display().to_string();
    let args = ["validate", "--store", &store, "--vocab", &vocab, "--embeddings", &emb];

    let ok = speaklabel(&args, tmp.path());
    assert_eq!(stdout_json(&ok)["sessions_checked"], 3);

    let bad = c.store.join("ann2/img001");
    let events = bad.join("events.jsonl");
    let mut text = std::fs::read_to_string(&events).unwrap();
    text.push_str("not json\n");
    std::fs::write(&events, text).unwrap();
    let out = speaklabel(&args, tmp.path());
    assert_eq!(out.status.code(), Some(3));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    let issues = summary["issues"].as_array().unwrap();
    assert_eq!(issues.len(), 1);
    assert!(issues[0]["path"].as_str().unwrap().ends_with("ann2/img001"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("img001"));
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nowhere").display().to_string();
    let flags = fixture_flags();
    let out = speaklabel(&with_fixtures(&["process", "--store", &missing], &flags), tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let line: Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(line["kind"], "usage");

    let out = speaklabel(&["process", "--bogus"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_and_environment_are_read() {
    let tmp = tempfile::tempdir().unwrap();
    let c = corpus(tmp.path(), 2);
    let config = tmp.path().join("speaklabel.toml");
    std::fs::write(
        &config,
        format!(
            "vocabularies = [{:?}]\nembeddings = {:?}\n[asr]\nfixture = {:?}\n",
            common::coco_path(),
            common::embeddings_path(),
            c.asr_fixture
        ),
    )
    .unwrap();
    let store = c.store.display().to_string();
    let out = Command::new(env!("CARGO_BIN_EXE_speaklabel"))
        .args(["process", "--store", &store, "--no-write"])
        .env("SPEAKLABEL_CONFIG", &config)
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(stdout_json(&out)["processed"], 2);

    let out = Command::new(env!("CARGO_BIN_EXE_speaklabel"))
        .args(["process", "--store", &store, "--no-write"])
        .env("SPEAKLABEL_CONFIG", &config)
        .env("SPEAKLABEL_DELTA_S", "minus one")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn synth_writes_all_fixture_sets() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let fixtures = common::fixtures().display().to_string();
    let out = speaklabel(
        &["synth", "--out", out_dir.to_str().unwrap(), "--fixtures", &fixtures, "--images", "4"],
        tmp.path(),
    );
    stdout_json(&out);
    for rel in [
        "coco300/store/ann4/img003/audio.wav",
        "coco300/gt.json",
        "location/asr_fixture.json",
        "training/with_hints/training_log.json",
        "training/round_799/gt.json",
    ] {
        assert!(out_dir.join(rel).is_file(), "{rel}");
    }
    assert_eq!(
        std::fs::read(out_dir.join("embeddings.txt")).unwrap(),
        std::fs::read(common::embeddings_path()).unwrap()
    );
}
