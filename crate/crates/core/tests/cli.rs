mod common;

use std::fs;

use common::{cli_ok, medrun, write_cli_config};

fn code(args: &[&str]) -> Option<i32> {
    medrun(args).status.code()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&["--help"]), Some(0));
    assert_eq!(code(&["--version"]), Some(0));
    assert_eq!(code(&["all", "--help"]), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&[]), Some(1));
    assert_eq!(code(&["frobnicate"]), Some(1));
    assert_eq!(code(&["all", "--bogus"]), Some(1));
    assert_eq!(code(&["all"]), Some(1));
    assert_eq!(code(&["all", "--config", "/nonexistent/config.json"]), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cli_config(dir.path(), "tfidf-logreg", |_| {});
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&["all", "--config", cfg, "--model", "svm"]), Some(1));
    assert_eq!(code(&["all", "--config", cfg, "--source", "tweets"]), Some(1));
    assert_eq!(code(&["all", "--config", cfg, "--seed", "-3"]), Some(1));
    // inputs not generated yet
    assert_eq!(code(&["ingest", "--config", cfg]), Some(1));
}

#[test]
fn invalid_config_values_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cli_config(dir.path(), "tfidf-logreg", |c| {
        c["split"] = serde_json::json!({"dev_firm_fraction": 1.5});
    });
    assert_eq!(code(&["ingest", "--config", cfg.to_str().unwrap()]), Some(1));
    let cfg = write_cli_config(dir.path(), "tfidf-logreg", |c| {
        c["unknown_section"] = serde_json::json!({});
    });
    assert_eq!(code(&["ingest", "--config", cfg.to_str().unwrap()]), Some(1));
}

#[test]
fn malformed_data_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cli_config(dir.path(), "tfidf-logreg", |_| {});
    let cfg = cfg.to_str().unwrap();
    cli_ok(&["fixture", "--config", cfg]).unwrap();
    let docs = dir.path().join("data/documents.csv");
    let mut text = fs::read_to_string(&docs).unwrap();
    text.push_str("broken,row\n");
    fs::write(&docs, text).unwrap();
    let out = medrun(&["ingest", "--config", cfg]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn stages_refuse_missing_or_foreign_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cli_config(dir.path(), "tfidf-logreg", |_| {});
    let cfg = cfg.to_str().unwrap();
    cli_ok(&["fixture", "--config", cfg]).unwrap();
    // train before split
    assert_eq!(code(&["train", "--config", cfg]), Some(1));
    for stage in ["ingest", "label", "split"] {
        cli_ok(&[stage, "--config", cfg]).unwrap();
    }
    // artifacts were written under seed 3
    let out = medrun(&["train", "--config", cfg, "--seed", "4"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rerun"));
    cli_ok(&["train", "--config", cfg]).unwrap();
    cli_ok(&["evaluate", "--config", cfg]).unwrap();
    let metrics = fs::read_to_string(dir.path().join("out/metrics.txt")).unwrap();
    assert!(metrics.starts_with("# config_sha256="));
    assert!(metrics.contains("TF-IDF + LogReg"));
    assert!(metrics.contains("News"));
}

#[test]
fn leaky_split_exits_three_and_removes_stale_split() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write_cli_config(dir.path(), "tfidf-logreg", |_| {});
    let ok = ok.to_str().unwrap();
    cli_ok(&["fixture", "--config", ok]).unwrap();
    let out = dir.path().join("out");
    for stage in ["ingest", "label", "split"] {
        cli_ok(&[stage, "--config", ok]).unwrap();
    }
    assert!(out.join("split.json").exists());

    let leaky = write_cli_config(dir.path(), "tfidf-logreg", |c| {
        c["split"] = serde_json::json!({"train_years": {"from": 2012, "to": 2018}, "test_years": {"from": 2019, "to": 2019}});
    });
    let leaky = leaky.to_str().unwrap();
    for stage in ["ingest", "label"] {
        cli_ok(&[stage, "--config", leaky]).unwrap();
    }
    let res = medrun(&["split", "--config", leaky]);
    assert_eq!(res.status.code(), Some(3));
    assert!(!out.join("split.json").exists());
    assert!(out.join("leakage.json").exists());

    let overlap = write_cli_config(dir.path(), "tfidf-logreg", |c| {
        c["split"] = serde_json::json!({"train_years": {"from": 2012, "to": 2019}, "test_years": {"from": 2019, "to": 2019}});
    });
    assert_eq!(code(&["ingest", "--config", overlap.to_str().unwrap()]), Some(3));
}

#[test]
fn source_override_changes_the_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cli_config(dir.path(), "tfidf-logreg", |_| {});
    let cfg = cfg.to_str().unwrap();
    cli_ok(&["fixture", "--config", cfg]).unwrap();
    let news = cli_ok(&["ingest", "--config", cfg]).unwrap();
    let reports = dir.path().join("reports");
    let rep = cli_ok(&["ingest", "--config", cfg, "--source", "report", "--out", reports.to_str().unwrap()]).unwrap();
    assert_ne!(news, rep);
    let corpus = fs::read_to_string(reports.join("corpus.csv")).unwrap();
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(corpus.as_bytes());
    let sources: Vec<String> = r.records().map(|rec| rec.unwrap()[3].to_string()).collect();
    assert!(!sources.is_empty());
    assert!(sources.iter().all(|s| s == "report"), "{sources:?}");
}
