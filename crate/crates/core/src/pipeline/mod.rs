//! Experiment orchestration. Each stage reads the artifacts of earlier
//! stages from the output directory, so `all` and the stages run one by one
//! produce the same files.

mod artifacts;
mod config;
mod stages;

use std::fmt;
use std::str::FromStr;

pub use artifacts::{read_json, read_text, write_atomic, write_json, write_text, Stamp};
pub use config::{
    CorpusSettings, EncoderOverrides, EncoderSize, Experiment, ExperimentConfig, FeatureSettings, MarketSettings,
    ModelKind, ModelSettings, Overrides, PathsConfig, SimulationSettings, SourceFilter, SplitSettings, SweepSettings,
    TransformerSettings,
};
pub use stages::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Ingest,
    Label,
    Split,
    Train,
    Evaluate,
    Simulate,
    SweepEpochs,
    SweepEncoder,
    All,
    Fixture,
}

impl Command {
    pub const ALL: [Command; 10] = [
        Command::Ingest,
        Command::Label,
        Command::Split,
        Command::Train,
        Command::Evaluate,
        Command::Simulate,
        Command::SweepEpochs,
        Command::SweepEncoder,
        Command::All,
        Command::Fixture,
    ];

    /// The stages `all` runs, in order.
    pub const PIPELINE: [Command; 6] = [
        Command::Ingest,
        Command::Label,
        Command::Split,
        Command::Train,
        Command::Evaluate,
        Command::Simulate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Label => "label",
            Command::Split => "split",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Simulate => "simulate",
            Command::SweepEpochs => "sweep-epochs",
            Command::SweepEncoder => "sweep-encoder",
            Command::All => "all",
            Command::Fixture => "fixture",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Usage(format!("unknown command {s:?}")))
    }
}

/// Runs one command and returns its human-readable report.
pub fn run(command: Command, exp: &Experiment) -> Result<String> {
    log::info!("{command}: config {}", exp.config_hash);
    match command {
        Command::Ingest => ingest(exp),
        Command::Label => label(exp),
        Command::Split => split(exp),
        Command::Train => train(exp),
        Command::Evaluate => evaluate_stage(exp),
        Command::Simulate => simulate(exp),
        Command::SweepEpochs => sweep_epochs(exp),
        Command::SweepEncoder => sweep_encoder(exp),
        Command::Fixture => fixture(exp),
        Command::All => {
            let mut out = String::new();
            for stage in Command::PIPELINE {
                let report = run(stage, exp)?;
                out.push_str(&report);
                if !report.ends_with('\n') {
                    out.push('\n');
                }
            }
            Ok(out)
        }
    }
}
