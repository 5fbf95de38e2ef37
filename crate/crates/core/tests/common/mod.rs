//! Shared helpers for the CLI-driven tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

pub fn medrun(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_medrun"))
        .args(args)
        .output()
        .expect("run medrun")
}

pub fn cli_ok(args: &[&str]) -> Result<String, String> {
    let out = medrun(args);
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!(
            "medrun {} exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

/// A reduced market fixture config written into `dir`.
pub fn write_cli_config(dir: &Path, model: &str, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    let mut c = serde_json::json!({
        "paths": {"documents": "data/documents.csv", "prices": "data/prices.csv", "out": "out"},
        "source": "news",
        "corpus": {"n_firms": 12, "min_items": 10},
        "features": {"max_vocab": 5000, "min_df": 2},
        "model": {
            "kind": model,
            "logreg": {"learning_rate": 0.5, "epochs": 20, "batch_size": 32},
            "gbt": {"rounds": 20, "max_depth": 3, "learning_rate": 0.2, "feature_cap": 300},
            "transformer": {"preset": "desk", "vocab_cap": 2000,
                "overrides": {"d_model": 16, "n_heads": 2, "n_layers": 1, "d_ff": 32, "max_seq_len": 40, "epochs": 2}}
        },
        "simulation": {"k": 3},
        "sweeps": {"max_epoch": 4, "encoder_sizes": [
            {"name": "tiny", "d_model": 8, "n_heads": 2, "n_layers": 1, "d_ff": 16},
            {"name": "small", "d_model": 16, "n_heads": 2, "n_layers": 1, "d_ff": 32},
            {"name": "medium", "d_model": 24, "n_heads": 4, "n_layers": 2, "d_ff": 48}
        ]},
        "seed": 3,
        "fixture": {
            "n_firms": 12, "first_year": 2012, "last_year": 2020,
            "news_per_year": 6, "blogs_per_year": 3, "reports_per_year": 1, "report_paragraphs": 3,
            "doc_len": 25, "filler_vocab": 200,
            "signal": {"news": 0.9, "blogs": 0.6, "report": 0.35},
            "drift_std": 0.3, "daily_vol": 0.012, "horizon_days": 365, "seed": 5
        }
    });
    edit(&mut c);
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&c).unwrap()).unwrap();
    path
}

pub fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}
