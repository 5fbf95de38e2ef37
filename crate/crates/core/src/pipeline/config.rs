//! Experiment configuration: JSON schema, CLI overrides and the config hash.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{BoostedParams, LogisticParams};
use crate::corpus::{SourceKind, DEFAULT_MIN_ITEMS, DEFAULT_PARAGRAPH_MIN_CHARS};
use crate::encoder::{EncoderConfig, EncoderPreset};
use crate::error::{Error, Result};
use crate::features::{DEFAULT_MAX_VOCAB, DEFAULT_MIN_DF};
use crate::fixture::SyntheticConfig;
use crate::market::Benchmark;
use crate::simulation::DEFAULT_K;
use crate::splits::{SplitConfig, YearRange};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub paths: PathsConfig,
    #[serde(default)]
    pub source: SourceFilter,
    #[serde(default)]
    pub corpus: CorpusSettings,
    #[serde(default)]
    pub split: SplitSettings,
    #[serde(default)]
    pub market: MarketSettings,
    #[serde(default)]
    pub features: FeatureSettings,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub simulation: SimulationSettings,
    #[serde(default)]
    pub sweeps: SweepSettings,
    /// The only seed; it overrides the per-model seed fields.
    #[serde(default)]
    pub seed: u64,
    /// Parameters for the `fixture` command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<SyntheticConfig>,
}

/// Relative paths resolve against the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub documents: PathBuf,
    pub prices: PathBuf,
    /// Separate price file holding the index series for `Benchmark::Index`.
    /// When absent the index ticker is taken out of `prices`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_prices: Option<PathBuf>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFilter {
    News,
    Blogs,
    Report,
    #[default]
    Any,
}

impl SourceFilter {
    pub fn kind(self) -> Option<SourceKind> {
        match self {
            SourceFilter::News => Some(SourceKind::News),
            SourceFilter::Blogs => Some(SourceKind::Blog),
            SourceFilter::Report => Some(SourceKind::Report),
            SourceFilter::Any => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SourceFilter::News => "news",
            SourceFilter::Blogs => "blogs",
            SourceFilter::Report => "report",
            SourceFilter::Any => "any",
        }
    }

    /// Column heading in the metrics table.
    pub fn column(self) -> &'static str {
        match self {
            SourceFilter::News => "News",
            SourceFilter::Blogs => "Blogs",
            SourceFilter::Report => "Company Reports",
            SourceFilter::Any => "All Sources",
        }
    }
}

impl fmt::Display for SourceFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "news" => Ok(SourceFilter::News),
            "blogs" => Ok(SourceFilter::Blogs),
            "report" => Ok(SourceFilter::Report),
            "any" => Ok(SourceFilter::Any),
            other => Err(Error::Usage(format!(
                "unknown source {other:?}; expected news, blogs, report or any"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSettings {
    pub n_firms: usize,
    pub min_items: usize,
    pub paragraph_min_chars: usize,
}

impl Default for CorpusSettings {
    fn default() -> Self {
        CorpusSettings {
            n_firms: 250,
            min_items: DEFAULT_MIN_ITEMS,
            paragraph_min_chars: DEFAULT_PARAGRAPH_MIN_CHARS,
        }
    }
}

/// `SplitConfig` minus the seed, which comes from the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSettings {
    pub train_years: YearRange,
    pub test_years: YearRange,
    pub dev_firm_fraction: f64,
    pub horizon_days: i64,
}

impl Default for SplitSettings {
    fn default() -> Self {
        let p = SplitConfig::paper(0);
        SplitSettings {
            train_years: p.train_years,
            test_years: p.test_years,
            dev_firm_fraction: p.dev_firm_fraction,
            horizon_days: p.horizon_days,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketSettings {
    pub benchmark: Benchmark,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSettings {
    pub max_vocab: usize,
    pub min_df: usize,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        FeatureSettings {
            max_vocab: DEFAULT_MAX_VOCAB,
            min_df: DEFAULT_MIN_DF,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ModelKind {
    #[default]
    #[serde(rename = "tfidf-logreg")]
    TfidfLogreg,
    #[serde(rename = "tfidf-gbt")]
    TfidfGbt,
    #[serde(rename = "transformer")]
    Transformer,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::TfidfLogreg => "tfidf-logreg",
            ModelKind::TfidfGbt => "tfidf-gbt",
            ModelKind::Transformer => "transformer",
        }
    }

    /// Row heading in the metrics table.
    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::TfidfLogreg => "TF-IDF + LogReg",
            ModelKind::TfidfGbt => "TF-IDF + GBT",
            ModelKind::Transformer => "Transformer",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tfidf-logreg" => Ok(ModelKind::TfidfLogreg),
            "tfidf-gbt" => Ok(ModelKind::TfidfGbt),
            "transformer" => Ok(ModelKind::Transformer),
            other => Err(Error::Usage(format!(
                "unknown model {other:?}; expected tfidf-logreg, tfidf-gbt or transformer"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub kind: ModelKind,
    pub logreg: LogisticParams,
    pub gbt: BoostedParams,
    pub transformer: TransformerSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformerSettings {
    pub preset: EncoderPreset,
    /// Most frequent training tokens kept, not counting the special tokens.
    pub vocab_cap: usize,
    pub overrides: EncoderOverrides,
}

impl Default for TransformerSettings {
    fn default() -> Self {
        TransformerSettings {
            preset: EncoderPreset::Desk,
            vocab_cap: 30_000,
            overrides: EncoderOverrides::default(),
        }
    }
}

/// Fields replacing the preset's values when set.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_model: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_heads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_layers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_ff: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_seq_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropout: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
}

impl TransformerSettings {
    pub fn encoder_config(&self, vocab_size: usize, seed: u64) -> EncoderConfig {
        let o = &self.overrides;
        let base = EncoderConfig::preset(self.preset, vocab_size);
        EncoderConfig {
            vocab_size,
            d_model: o.d_model.unwrap_or(base.d_model),
            n_heads: o.n_heads.unwrap_or(base.n_heads),
            n_layers: o.n_layers.unwrap_or(base.n_layers),
            d_ff: o.d_ff.unwrap_or(base.d_ff),
            max_seq_len: o.max_seq_len.unwrap_or(base.max_seq_len),
            dropout: o.dropout.unwrap_or(base.dropout),
            learning_rate: o.learning_rate.unwrap_or(base.learning_rate),
            batch_size: o.batch_size.unwrap_or(base.batch_size),
            epochs: o.epochs.unwrap_or(base.epochs),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSettings {
    pub k: usize,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        SimulationSettings { k: DEFAULT_K }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSize {
    pub name: String,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    /// `sweep-epochs` reports epochs `1..=max_epoch`.
    pub max_epoch: usize,
    pub encoder_sizes: Vec<EncoderSize>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        let size = |name: &str, d_model, n_heads, n_layers, d_ff| EncoderSize {
            name: name.to_string(),
            d_model,
            n_heads,
            n_layers,
            d_ff,
        };
        SweepSettings {
            max_epoch: 4,
            encoder_sizes: vec![
                size("small", 32, 2, 1, 128),
                size("medium", 64, 4, 2, 256),
                size("desk", 128, 4, 2, 512),
            ],
        }
    }
}

/// Values given on the command line; they win over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub model: Option<ModelKind>,
    pub source: Option<SourceFilter>,
    /// Output directory, relative to the working directory.
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn split_config(&self) -> SplitConfig {
        SplitConfig {
            train_years: self.split.train_years,
            test_years: self.split.test_years,
            dev_firm_fraction: self.split.dev_firm_fraction,
            horizon_days: self.split.horizon_days,
            seed: self.seed,
        }
    }

    /// First and last calendar year any document may come from.
    pub fn year_span(&self) -> (i32, i32) {
        let (a, b) = (self.split.train_years, self.split.test_years);
        (a.from.min(b.from), a.to.max(b.to))
    }

    /// Copies the experiment seed into every nested seed field.
    pub fn propagate_seed(&mut self) {
        self.model.logreg.seed = self.seed;
        self.model.gbt.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.corpus.n_firms == 0 {
            return bad("corpus.n_firms must be at least 1");
        }
        self.split_config().validate()?;
        if self.features.max_vocab == 0 || self.features.min_df == 0 {
            return bad("features.max_vocab and features.min_df must be at least 1");
        }
        if self.simulation.k == 0 {
            return bad("simulation.k must be at least 1");
        }
        if self.sweeps.max_epoch == 0 {
            return bad("sweeps.max_epoch must be at least 1");
        }
        if self.sweeps.encoder_sizes.is_empty() {
            return bad("sweeps.encoder_sizes must not be empty");
        }
        if self.model.transformer.vocab_cap == 0 {
            return bad("model.transformer.vocab_cap must be at least 1");
        }
        let t = &self.model.transformer;
        t.encoder_config(crate::encoder::SPECIAL_TOKENS.len() + 1, self.seed).validate()?;
        for s in &self.sweeps.encoder_sizes {
            EncoderConfig {
                d_model: s.d_model,
                n_heads: s.n_heads,
                n_layers: s.n_layers,
                d_ff: s.d_ff,
                ..t.encoder_config(crate::encoder::SPECIAL_TOKENS.len() + 1, self.seed)
            }
            .validate()
            .map_err(|e| Error::Config(format!("encoder size {:?}: {e}", s.name)))?;
        }
        if let Benchmark::Index(t) = &self.market.benchmark {
            if t.is_empty() {
                return bad("market.benchmark index ticker is empty");
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, leaving out `paths.out` so the
    /// same experiment hashes identically wherever its output goes.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.paths.out = PathBuf::new();
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// A validated config with overrides applied and paths resolved.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub config_hash: String,
    base_dir: PathBuf,
    out_dir: PathBuf,
}

impl Experiment {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config = ExperimentConfig::from_json(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(config, &base, overrides)
    }

    pub fn new(mut config: ExperimentConfig, base_dir: &Path, overrides: &Overrides) -> Result<Self> {
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(model) = overrides.model {
            config.model.kind = model;
        }
        if let Some(source) = overrides.source {
            config.source = source;
        }
        config.propagate_seed();
        config.validate()?;
        let out_dir = match &overrides.out {
            Some(out) => out.clone(),
            None => base_dir.join(&config.paths.out),
        };
        Ok(Experiment {
            config_hash: config.hash(),
            config,
            base_dir: base_dir.to_path_buf(),
            out_dir,
        })
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.base_dir.join(path)
    }

    pub fn documents_path(&self) -> PathBuf {
        self.resolve(&self.config.paths.documents)
    }

    pub fn prices_path(&self) -> PathBuf {
        self.resolve(&self.config.paths.prices)
    }

    pub fn index_prices_path(&self) -> Option<PathBuf> {
        self.config.paths.index_prices.as_deref().map(|p| self.resolve(p))
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"paths": {"documents": "d.csv", "prices": "p.csv", "out": "out"}}"#;

    #[test]
    fn defaults_match_reference_setup() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.corpus.n_firms, 250);
        assert_eq!(c.corpus.min_items, 170);
        assert_eq!(c.split_config(), SplitConfig::paper(0));
        assert_eq!(c.simulation.k, 10);
        assert_eq!(c.sweeps.max_epoch, 4);
        assert!(c.sweeps.encoder_sizes.len() >= 3);
        assert_eq!(c.source, SourceFilter::Any);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_fields_and_bad_values_are_config_errors() {
        let extra = MINIMAL.replace("\"out\"}", "\"out\"}, \"bogus\": 1");
        assert_eq!(ExperimentConfig::from_json(&extra).unwrap_err().exit_code(), 1);
        let bad_model = MINIMAL.replace("}}", "}, \"model\": {\"kind\": \"svm\"}}");
        assert_eq!(ExperimentConfig::from_json(&bad_model).unwrap_err().exit_code(), 1);
        let mut c = ExperimentConfig::from_json(MINIMAL).unwrap();
        c.split.dev_firm_fraction = 1.5;
        assert_eq!(c.validate().unwrap_err().exit_code(), 1);
        c.split.dev_firm_fraction = 0.1;
        c.split.test_years = YearRange::new(2016, 2019);
        assert_eq!(c.validate().unwrap_err().exit_code(), 3);
    }

    #[test]
    fn overrides_change_the_hash_but_out_does_not() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        let base = Experiment::new(c.clone(), Path::new("/cfg"), &Overrides::default()).unwrap();
        assert_eq!(base.documents_path(), PathBuf::from("/cfg/d.csv"));
        assert_eq!(base.out_dir(), Path::new("/cfg/out"));
        let moved = Experiment::new(
            c.clone(),
            Path::new("/cfg"),
            &Overrides {
                out: Some("elsewhere".into()),
                ..Overrides::default()
            },
        )
        .unwrap();
        assert_eq!(moved.config_hash, base.config_hash);
        assert_eq!(moved.out_dir(), Path::new("elsewhere"));
        let seeded = Experiment::new(
            c,
            Path::new("/cfg"),
            &Overrides {
                seed: Some(9),
                model: Some(ModelKind::TfidfGbt),
                ..Overrides::default()
            },
        )
        .unwrap();
        assert_ne!(seeded.config_hash, base.config_hash);
        assert_eq!(seeded.config.model.gbt.seed, 9);
        assert_eq!(seeded.config.model.kind, ModelKind::TfidfGbt);
    }

    #[test]
    fn encoder_overrides_apply_over_preset() {
        let mut t = TransformerSettings::default();
        t.overrides.d_model = Some(16);
        t.overrides.epochs = Some(2);
        let c = t.encoder_config(50, 4);
        assert_eq!((c.d_model, c.n_heads, c.epochs, c.seed, c.vocab_size), (16, 4, 2, 4, 50));
    }

    #[test]
    fn names_round_trip() {
        for m in [ModelKind::TfidfLogreg, ModelKind::TfidfGbt, ModelKind::Transformer] {
            assert_eq!(m.as_str().parse::<ModelKind>().unwrap(), m);
        }
        for s in [SourceFilter::News, SourceFilter::Blogs, SourceFilter::Report, SourceFilter::Any] {
            assert_eq!(s.as_str().parse::<SourceFilter>().unwrap(), s);
        }
    }
}
