//! Label company-related documents with one-year abnormal-return tertiles,
//! train text classifiers over them and backtest the resulting picks.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`corpus`]: document ingestion, report paragraph splitting, firm selection
//! - [`market`]: forward and abnormal returns, tertile labels, rolling averages
//! - [`splits`]: leakage-gapped temporal train/dev/test partition
//! - [`features`]: tokenizer and TF-IDF vectorizer
//! - [`baselines`]: multinomial logistic regression and Newton-boosted trees
//! - [`encoder`]: transformer encoder classifier with hand-written backprop
//! - [`evaluation`]: accuracy, macro-F1, confusion matrices
//! - [`simulation`]: firm-level picks and rolling one-year performance
//! - [`pipeline`]: config, artifacts and the commands behind the CLI

pub mod baselines;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod fixture;
pub mod market;
pub mod pipeline;
pub mod simulation;
pub mod splits;

pub use baselines::PredictionRecord;
pub use error::{Error, Result};
pub use market::PerformanceClass;
