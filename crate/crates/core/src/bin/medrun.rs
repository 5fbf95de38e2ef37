use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use medrun::error::Error;
use medrun::pipeline::{run, Command, Experiment, ModelKind, Overrides, SourceFilter};

/// Label documents by one-year abnormal-return tertiles, train text
/// classifiers and backtest their picks.
#[derive(Parser, Debug)]
#[command(name = "medrun", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the model: tfidf-logreg, tfidf-gbt or transformer.
    #[arg(long, global = true)]
    model: Option<String>,

    /// Override the text source: news, blogs, report or any.
    #[arg(long, global = true)]
    source: Option<String>,

    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Select firms and sources, split reports into paragraphs.
    Ingest,
    /// Attach one-year abnormal returns and tertile labels.
    Label,
    /// Temporal train/dev/test split with the leakage check.
    Split,
    /// Fit the configured model on the train split.
    Train,
    /// Score the test split.
    Evaluate,
    /// Backtest the test-split predictions.
    Simulate,
    /// Encoder accuracy after each of epochs 1..=max_epoch.
    SweepEpochs,
    /// Encoder accuracy for each configured model size.
    SweepEncoder,
    /// ingest, label, split, train, evaluate, simulate.
    All,
    /// Write the synthetic fixture to the configured input paths.
    Fixture,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Command {
        match c {
            Cmd::Ingest => Command::Ingest,
            Cmd::Label => Command::Label,
            Cmd::Split => Command::Split,
            Cmd::Train => Command::Train,
            Cmd::Evaluate => Command::Evaluate,
            Cmd::Simulate => Command::Simulate,
            Cmd::SweepEpochs => Command::SweepEpochs,
            Cmd::SweepEncoder => Command::SweepEncoder,
            Cmd::All => Command::All,
            Cmd::Fixture => Command::Fixture,
        }
    }
}

fn execute(cli: Cli) -> Result<String, Error> {
    let config = cli
        .config
        .ok_or_else(|| Error::Usage("--config <path> is required".into()))?;
    let overrides = Overrides {
        seed: cli.seed,
        model: cli.model.as_deref().map(str::parse::<ModelKind>).transpose()?,
        source: cli.source.as_deref().map(str::parse::<SourceFilter>).transpose()?,
        out: cli.out,
    };
    let experiment = Experiment::load(&config, &overrides)?;
    run(cli.command.into(), &experiment)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(report) => {
            print!("{report}");
            if !report.ends_with('\n') {
                println!();
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Validation { violations, .. } = &e {
                for v in violations {
                    eprintln!("  violation: {v}");
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
