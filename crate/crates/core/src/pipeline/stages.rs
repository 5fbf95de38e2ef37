use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::artifacts::{csv_string, parse_csv, read_json, read_text, write_atomic, write_json, write_text, Stamp};
use super::config::{EncoderSize, Experiment, ModelKind, SourceFilter};
use crate::baselines::{
    train_boosted, train_logistic, BoostedModel, LabeledVector, LogisticModel, PredictionRecord,
};
use crate::corpus::{
    filter_years, load_documents, read_documents, select_top_covered, Corpus, CorpusStats, Document, DocumentFormat,
    LoadOptions, SourceKind,
};
use crate::encoder::{
    build_vocab, read_checkpoint, train_encoder, train_encoder_with, write_checkpoint, EncoderConfig, EncoderModel,
    TokenSequence, TokenVocab,
};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, format_table, format_table_with, MetricsReport};
use crate::features::{self, tokenize, TfidfModel};
use crate::fixture::{generate_market, write_synthetic};
use crate::market::{
    assign_label, fit_tertiles, forward_return, AbnormalReturn, Benchmark, CsvPriceFile, Market, PerformanceClass,
    PriceBook, PriceSeries, PriceSource, TertileBreakpoints,
};
use crate::simulation::{self, aggregate_firm, FirmPrediction, SimulationReport};
use crate::splits::{make_temporal_split, validate_no_leakage, LeakageReport, Split};

pub const CORPUS_CSV: &str = "corpus.csv";
pub const CORPUS_STATS_JSON: &str = "corpus_stats.json";
pub const LABELS_CSV: &str = "labels.csv";
pub const LABELS_JSON: &str = "labels.json";
pub const SPLIT_JSON: &str = "split.json";
pub const LEAKAGE_JSON: &str = "leakage.json";
pub const MODEL_JSON: &str = "model.json";
pub const ENCODER_CKPT: &str = "encoder.ckpt";
pub const TRAIN_LOSS_CSV: &str = "train_loss.csv";
pub const TRAIN_SUMMARY_JSON: &str = "train_summary.json";
pub const PREDICTIONS_CSV: &str = "predictions.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_TXT: &str = "metrics.txt";
pub const SIMULATION_JSON: &str = "simulation.json";
pub const SIMULATION_TXT: &str = "simulation.txt";
pub const SIMULATION_GROUPS_CSV: &str = "simulation_groups.csv";
pub const SIMULATION_SERIES_CSV: &str = "simulation_series.csv";
pub const SWEEP_EPOCHS_CSV: &str = "sweep_epochs.csv";
pub const SWEEP_EPOCHS_TXT: &str = "sweep_epochs.txt";
pub const SWEEP_ENCODER_CSV: &str = "sweep_encoder.csv";
pub const SWEEP_ENCODER_TXT: &str = "sweep_encoder.txt";

fn stamp(exp: &Experiment) -> Stamp {
    Stamp {
        config_sha256: exp.config_hash.clone(),
        seed: exp.config.seed,
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} file {} does not exist", path.display())))
    }
}

/// Reads a stamped text artifact and checks it belongs to this experiment.
fn read_own_text(exp: &Experiment, name: &str) -> Result<String> {
    let path = exp.artifact(name);
    if !path.is_file() {
        return Err(Error::Usage(format!(
            "{} is missing; run the stage that produces it first",
            path.display()
        )));
    }
    let (found, body) = read_text(&path)?;
    stamp(exp).check(&found, &path)?;
    Ok(body)
}

fn read_own_json<T: serde::de::DeserializeOwned>(exp: &Experiment, name: &str) -> Result<T> {
    let path = exp.artifact(name);
    if !path.is_file() {
        return Err(Error::Usage(format!(
            "{} is missing; run the stage that produces it first",
            path.display()
        )));
    }
    let (found, body) = read_json(&path)?;
    stamp(exp).check(&found, &path)?;
    Ok(body)
}

// ---- ingest ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub input_documents: usize,
    pub source: SourceFilter,
    pub years: (i32, i32),
    /// News and blog item count of each selected firm.
    pub selected_firms: BTreeMap<String, usize>,
    pub warnings: Vec<String>,
    pub corpus: CorpusStats,
}

pub fn ingest(exp: &Experiment) -> Result<String> {
    let c = &exp.config;
    let path = exp.documents_path();
    require_file(&path, "documents")?;
    let raw = load_documents(&path, DocumentFormat::from_path(&path)?)?;
    let years = c.year_span();
    let in_years = filter_years(&raw, years.0, years.1);
    let selection = select_top_covered(&in_years, c.corpus.n_firms, c.corpus.min_items)?;
    for w in &selection.warnings {
        log::warn!("{w}");
    }
    let mut corpus = in_years.retain_tickers(&selection.tickers);
    if let Some(kind) = c.source.kind() {
        corpus = corpus.retain_source(kind);
    }
    let corpus = corpus.expand_reports(c.corpus.paragraph_min_chars);
    if corpus.is_empty() {
        return Err(Error::Data(format!(
            "no {} documents left for the selected firms in {}-{}",
            c.source, years.0, years.1
        )));
    }

    let mut csv = Vec::new();
    corpus.write_csv(&mut csv)?;
    let st = stamp(exp);
    write_text(&exp.artifact(CORPUS_CSV), &st, std::str::from_utf8(&csv).expect("utf-8 csv"))?;
    let summary = IngestSummary {
        input_documents: raw.len(),
        source: c.source,
        years,
        selected_firms: selection.counts,
        warnings: selection.warnings,
        corpus: corpus.stats(),
    };
    write_json(&exp.artifact(CORPUS_STATS_JSON), &st, &summary)?;
    Ok(format!(
        "ingest: {} {} documents from {} firms",
        summary.corpus.documents, c.source, summary.corpus.tickers
    ))
}

fn read_corpus(exp: &Experiment) -> Result<Corpus> {
    let body = read_own_text(exp, CORPUS_CSV)?;
    read_documents(
        body.as_bytes(),
        DocumentFormat::Csv,
        &exp.artifact(CORPUS_CSV),
        LoadOptions::default(),
    )
}

// ---- label ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub id: String,
    pub ticker: String,
    pub date: NaiveDate,
    pub source: SourceKind,
    pub stock_return: f64,
    pub market_return: f64,
    pub abnormal_return: f64,
    pub label: PerformanceClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unlabelable {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub horizon_days: i64,
    pub benchmark: Benchmark,
    pub breakpoints: TertileBreakpoints,
    pub labeled: usize,
    pub class_counts: BTreeMap<PerformanceClass, usize>,
    pub unlabelable: Vec<Unlabelable>,
}

/// Firm prices plus the index series when the benchmark needs one.
struct Prices {
    firms: PriceBook,
    index: Option<PriceSeries>,
}

impl Prices {
    fn load(exp: &Experiment) -> Result<Prices> {
        let path = exp.prices_path();
        require_file(&path, "prices")?;
        let mut firms = CsvPriceFile::new(&path).load()?;
        let index = match &exp.config.market.benchmark {
            Benchmark::EqualWeighted => None,
            Benchmark::Index(ticker) => {
                let series = match exp.index_prices_path() {
                    Some(p) => {
                        require_file(&p, "index prices")?;
                        CsvPriceFile::new(&p).load()?.remove(ticker)
                    }
                    None => firms.remove(ticker),
                };
                Some(series.ok_or_else(|| Error::Data(format!("no price series for index {ticker}")))?)
            }
        };
        Ok(Prices { firms, index })
    }

    fn market(&self, horizon_days: i64) -> Market<'_> {
        match &self.index {
            Some(index) => Market::with_index(&self.firms, index, horizon_days),
            None => Market::equal_weighted(&self.firms, horizon_days),
        }
    }
}

pub fn label(exp: &Experiment) -> Result<String> {
    let c = &exp.config;
    let corpus = read_corpus(exp)?;
    let prices = Prices::load(exp)?;
    let horizon = c.split.horizon_days;
    let market = prices.market(horizon);

    // one market return per distinct anchor date
    let mut market_cache: BTreeMap<NaiveDate, Option<f64>> = BTreeMap::new();
    let mut returns = Vec::new();
    let mut unlabelable = Vec::new();
    for doc in corpus.iter() {
        let skip = |reason: &str| Unlabelable {
            id: doc.id.clone(),
            reason: reason.to_string(),
        };
        let Some(series) = prices.firms.get(&doc.ticker) else {
            unlabelable.push(skip("no price series"));
            continue;
        };
        let Some(stock) = forward_return(series, doc.date, horizon) else {
            unlabelable.push(skip("no trading day within tolerance of the anchor or horizon end"));
            continue;
        };
        let m = *market_cache
            .entry(doc.date)
            .or_insert_with(|| market.market_return(doc.date).ok());
        let Some(m) = m else {
            unlabelable.push(skip("no market return for the anchor date"));
            continue;
        };
        returns.push((doc, AbnormalReturn::new(&doc.ticker, doc.date, stock, m)));
    }

    let train = c.split.train_years;
    let fit_on: Vec<f64> = returns
        .iter()
        .filter(|(d, _)| train.contains(chrono::Datelike::year(&d.date)))
        .map(|(_, r)| r.abnormal)
        .collect();
    let breakpoints = fit_tertiles(
        &fit_on,
        format!("{} train documents, {}-{}", fit_on.len(), train.from, train.to),
    )?;

    let mut class_counts: BTreeMap<PerformanceClass, usize> = PerformanceClass::ALL.iter().map(|&k| (k, 0)).collect();
    let rows: Vec<LabelRow> = returns
        .iter()
        .map(|(d, r)| {
            let label = assign_label(r.abnormal, &breakpoints);
            *class_counts.get_mut(&label).unwrap() += 1;
            LabelRow {
                id: d.id.clone(),
                ticker: d.ticker.clone(),
                date: d.date,
                source: d.source,
                stock_return: r.stock_return,
                market_return: r.market_return,
                abnormal_return: r.abnormal,
                label,
            }
        })
        .collect();
    if !unlabelable.is_empty() {
        log::warn!("{} documents have no one-year return and were dropped", unlabelable.len());
    }

    let st = stamp(exp);
    write_text(&exp.artifact(LABELS_CSV), &st, &csv_string(&rows)?)?;
    let summary = LabelSummary {
        horizon_days: horizon,
        benchmark: c.market.benchmark.clone(),
        breakpoints,
        labeled: rows.len(),
        class_counts,
        unlabelable,
    };
    write_json(&exp.artifact(LABELS_JSON), &st, &summary)?;
    Ok(format!(
        "label: {} labeled, {} unlabelable; breakpoints {:.4} / {:.4}",
        summary.labeled,
        summary.unlabelable.len(),
        summary.breakpoints.q33,
        summary.breakpoints.q66
    ))
}

fn read_labels(exp: &Experiment) -> Result<Vec<LabelRow>> {
    let body = read_own_text(exp, LABELS_CSV)?;
    parse_csv(&body, &exp.artifact(LABELS_CSV))
}

// ---- split ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitArtifact {
    pub train_documents: usize,
    pub dev_documents: usize,
    pub test_documents: usize,
    pub split: Split,
}

fn labeled_corpus(corpus: &Corpus, labels: &[LabelRow]) -> Result<Corpus> {
    let ids: BTreeSet<&str> = labels.iter().map(|l| l.id.as_str()).collect();
    Corpus::new(corpus.iter().filter(|d| ids.contains(d.id.as_str())).cloned().collect())
}

pub fn split(exp: &Experiment) -> Result<String> {
    let corpus = labeled_corpus(&read_corpus(exp)?, &read_labels(exp)?)?;
    let cfg = exp.config.split_config();
    let split = make_temporal_split(&corpus, &cfg)?;
    let report = validate_no_leakage(&split, &corpus, &cfg)?;
    let st = stamp(exp);
    write_json(&exp.artifact(LEAKAGE_JSON), &st, &report)?;
    let split_path = exp.artifact(SPLIT_JSON);
    if !report.passed {
        // a stale split must not feed later stages
        if split_path.exists() {
            std::fs::remove_file(&split_path).map_err(|e| Error::io(&split_path, e))?;
        }
        return Err(leakage_error(&report));
    }
    let artifact = SplitArtifact {
        train_documents: split.train.len(),
        dev_documents: split.dev.len(),
        test_documents: split.test.len(),
        split,
    };
    write_json(&split_path, &st, &artifact)?;
    Ok(format!(
        "split: {} train, {} dev, {} test documents; leakage check passed",
        artifact.train_documents, artifact.dev_documents, artifact.test_documents
    ))
}

fn leakage_error(report: &LeakageReport) -> Error {
    Error::Validation {
        message: format!(
            "{} train/dev documents have a {}-day label window reaching the first test document ({})",
            report.violations.len(),
            report.horizon_days,
            report.earliest_test.map_or("-".to_string(), |d| d.to_string())
        ),
        violations: report.violations.clone(),
    }
}

// ---- shared data for training and evaluation ----

struct Dataset {
    corpus: Corpus,
    labels: BTreeMap<String, LabelRow>,
    split: Split,
}

impl Dataset {
    fn load(exp: &Experiment) -> Result<Dataset> {
        let labels = read_labels(exp)?;
        let corpus = labeled_corpus(&read_corpus(exp)?, &labels)?;
        let artifact: SplitArtifact = read_own_json(exp, SPLIT_JSON)?;
        Ok(Dataset {
            corpus,
            labels: labels.into_iter().map(|l| (l.id.clone(), l)).collect(),
            split: artifact.split,
        })
    }

    /// Documents and labels for `ids`, in id order.
    fn examples(&self, ids: &BTreeSet<String>) -> Result<Vec<(&Document, PerformanceClass)>> {
        ids.iter()
            .map(|id| {
                let doc = self
                    .corpus
                    .get(id)
                    .ok_or_else(|| Error::Data(format!("split document {id} is not in the labeled corpus")))?;
                Ok((doc, self.labels[id].label))
            })
            .collect()
    }

    fn label_map(&self) -> BTreeMap<String, PerformanceClass> {
        self.labels.iter().map(|(id, l)| (id.clone(), l.label)).collect()
    }

    fn require_nonempty(&self, which: &str, ids: &BTreeSet<String>) -> Result<()> {
        if ids.is_empty() {
            return Err(Error::Data(format!("the {which} set is empty")));
        }
        Ok(())
    }
}

/// A fitted classifier of any supported kind.
pub enum TrainedModel {
    Logistic { tfidf: TfidfModel, model: LogisticModel },
    Boosted { tfidf: TfidfModel, model: BoostedModel },
    Encoder { vocab: TokenVocab, model: EncoderModel },
}

/// On-disk form of the TF-IDF baselines.
#[derive(Serialize, Deserialize)]
struct SavedBaseline {
    kind: ModelKind,
    tfidf: TfidfModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    logistic: Option<LogisticModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    boosted: Option<BoostedModel>,
}

impl TrainedModel {
    pub fn predict(&self, id: &str, text: &str) -> Result<PredictionRecord> {
        let tokens = tokenize(text);
        match self {
            TrainedModel::Logistic { tfidf, model } => model.predict(id, &tfidf.transform(&tokens)),
            TrainedModel::Boosted { tfidf, model } => model.predict(id, &tfidf.transform(&tokens)),
            TrainedModel::Encoder { vocab, model } => {
                let seq = vocab.encode(&tokens, model.config().max_seq_len);
                Ok(PredictionRecord::new(id, model.predict_proba(&seq)?))
            }
        }
    }

    fn predict_all(&self, docs: &[(&Document, PerformanceClass)]) -> Result<Vec<PredictionRecord>> {
        docs.iter().map(|(d, _)| self.predict(&d.id, &d.text)).collect()
    }
}

fn encoder_examples(
    vocab: &TokenVocab,
    config: &EncoderConfig,
    docs: &[(&Document, PerformanceClass)],
) -> Vec<(TokenSequence, PerformanceClass)> {
    docs.iter()
        .map(|(d, y)| (vocab.encode(&tokenize(&d.text), config.max_seq_len), *y))
        .collect()
}

fn fit_vocab(exp: &Experiment, docs: &[(&Document, PerformanceClass)]) -> Result<TokenVocab> {
    let tokens: Vec<Vec<String>> = docs.iter().map(|(d, _)| tokenize(&d.text)).collect();
    build_vocab(&tokens, exp.config.model.transformer.vocab_cap)
}

fn fit_tfidf(exp: &Experiment, docs: &[(&Document, PerformanceClass)]) -> Result<(TfidfModel, Vec<LabeledVector>)> {
    let tokens: Vec<Vec<String>> = docs.iter().map(|(d, _)| tokenize(&d.text)).collect();
    let f = &exp.config.features;
    let tfidf = features::fit(&tokens, f.max_vocab, f.min_df)?;
    let vectors = tokens
        .iter()
        .zip(docs)
        .map(|(t, (_, y))| (tfidf.transform(t), *y))
        .collect();
    Ok((tfidf, vectors))
}

// ---- train ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub model: ModelKind,
    pub source: SourceFilter,
    pub train_documents: usize,
    pub dev_documents: usize,
    pub train_class_counts: BTreeMap<PerformanceClass, usize>,
    /// TF-IDF dimension or token vocabulary size.
    pub vocabulary_size: usize,
    pub final_loss: f64,
    /// Monitoring only; nothing is selected on it.
    pub dev: Option<MetricsReport>,
}

#[derive(Serialize)]
struct EpochLoss {
    epoch: usize,
    objective: f64,
}

#[derive(Serialize)]
struct RoundLoss {
    round: usize,
    loss: f64,
}

pub fn train(exp: &Experiment) -> Result<String> {
    let c = &exp.config;
    let ds = Dataset::load(exp)?;
    ds.require_nonempty("train", &ds.split.train)?;
    let train_docs = ds.examples(&ds.split.train)?;
    let st = stamp(exp);

    let (model, loss_csv, final_loss, vocabulary_size) = match c.model.kind {
        ModelKind::TfidfLogreg => {
            let (tfidf, vectors) = fit_tfidf(exp, &train_docs)?;
            let model = train_logistic(&vectors, &c.model.logreg)?;
            let rows: Vec<EpochLoss> = model
                .loss_log
                .iter()
                .enumerate()
                .map(|(i, &objective)| EpochLoss { epoch: i + 1, objective })
                .collect();
            let last = model.loss_log.last().copied().unwrap_or(f64::NAN);
            let dim = tfidf.dim();
            (TrainedModel::Logistic { tfidf, model }, csv_string(&rows)?, last, dim)
        }
        ModelKind::TfidfGbt => {
            let (tfidf, vectors) = fit_tfidf(exp, &train_docs)?;
            let model = train_boosted(&vectors, &tfidf.vocabulary, &c.model.gbt)?;
            let rows: Vec<RoundLoss> = model
                .loss_log
                .iter()
                .enumerate()
                .map(|(round, &loss)| RoundLoss { round, loss })
                .collect();
            let last = model.loss_log.last().copied().unwrap_or(f64::NAN);
            let dim = tfidf.dim();
            (TrainedModel::Boosted { tfidf, model }, csv_string(&rows)?, last, dim)
        }
        ModelKind::Transformer => {
            let vocab = fit_vocab(exp, &train_docs)?;
            let config = c.model.transformer.encoder_config(vocab.len(), c.seed);
            let examples = encoder_examples(&vocab, &config, &train_docs);
            let trained = train_encoder(EncoderModel::new(config)?, &examples)?;
            let mut csv = Vec::new();
            crate::encoder::write_loss_log(&trained.loss_log, &mut csv)?;
            let last = trained.loss_log.last().map_or(f64::NAN, |r| r.loss);
            let size = vocab.len();
            (
                TrainedModel::Encoder {
                    vocab,
                    model: trained.model,
                },
                String::from_utf8(csv).expect("utf-8 csv"),
                last,
                size,
            )
        }
    };

    save_model(exp, &model)?;
    write_text(&exp.artifact(TRAIN_LOSS_CSV), &st, &loss_csv)?;

    let dev = if ds.split.dev.is_empty() {
        None
    } else {
        let dev_docs = ds.examples(&ds.split.dev)?;
        Some(evaluate(&model.predict_all(&dev_docs)?, &ds.label_map())?)
    };
    let mut train_class_counts: BTreeMap<PerformanceClass, usize> =
        PerformanceClass::ALL.iter().map(|&k| (k, 0)).collect();
    for (_, y) in &train_docs {
        *train_class_counts.get_mut(y).unwrap() += 1;
    }
    let summary = TrainSummary {
        model: c.model.kind,
        source: c.source,
        train_documents: train_docs.len(),
        dev_documents: ds.split.dev.len(),
        train_class_counts,
        vocabulary_size,
        final_loss,
        dev,
    };
    write_json(&exp.artifact(TRAIN_SUMMARY_JSON), &st, &summary)?;
    Ok(format!(
        "train: {} on {} documents, final loss {:.4}{}",
        c.model.kind,
        summary.train_documents,
        final_loss,
        summary.dev.as_ref().map_or(String::new(), |m| format!("; dev {}", m.cell()))
    ))
}

fn save_model(exp: &Experiment, model: &TrainedModel) -> Result<()> {
    let st = stamp(exp);
    let kind = exp.config.model.kind;
    match model {
        TrainedModel::Logistic { tfidf, model } => write_json(
            &exp.artifact(MODEL_JSON),
            &st,
            &SavedBaseline {
                kind,
                tfidf: tfidf.clone(),
                logistic: Some(model.clone()),
                boosted: None,
            },
        ),
        TrainedModel::Boosted { tfidf, model } => write_json(
            &exp.artifact(MODEL_JSON),
            &st,
            &SavedBaseline {
                kind,
                tfidf: tfidf.clone(),
                logistic: None,
                boosted: Some(model.clone()),
            },
        ),
        TrainedModel::Encoder { vocab, model } => {
            let mut bytes = Vec::new();
            write_checkpoint(model, Some(vocab), Some(&st.tag()), &mut bytes)?;
            write_atomic(&exp.artifact(ENCODER_CKPT), &bytes)
        }
    }
}

fn load_model(exp: &Experiment) -> Result<TrainedModel> {
    let kind = exp.config.model.kind;
    if kind == ModelKind::Transformer {
        let path = exp.artifact(ENCODER_CKPT);
        if !path.is_file() {
            return Err(Error::Usage(format!("{} is missing; run train first", path.display())));
        }
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let ckpt = read_checkpoint(&bytes[..])?;
        let found = ckpt
            .tag
            .as_deref()
            .and_then(Stamp::from_tag)
            .ok_or_else(|| Error::Data(format!("{} has no config stamp", path.display())))?;
        stamp(exp).check(&found, &path)?;
        let vocab = ckpt
            .vocab
            .ok_or_else(|| Error::Data(format!("{} has no vocabulary", path.display())))?;
        return Ok(TrainedModel::Encoder {
            vocab,
            model: ckpt.model,
        });
    }
    let saved: SavedBaseline = read_own_json(exp, MODEL_JSON)?;
    let broken = || Error::Data(format!("{MODEL_JSON} does not hold a {kind} model"));
    match (kind, saved.logistic, saved.boosted) {
        (ModelKind::TfidfLogreg, Some(model), _) if saved.kind == kind => Ok(TrainedModel::Logistic {
            tfidf: saved.tfidf,
            model,
        }),
        (ModelKind::TfidfGbt, _, Some(model)) if saved.kind == kind => Ok(TrainedModel::Boosted {
            tfidf: saved.tfidf,
            model,
        }),
        _ => Err(broken()),
    }
}

// ---- evaluate ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    pub ticker: String,
    pub date: NaiveDate,
    pub p_under: f64,
    pub p_average: f64,
    pub p_over: f64,
    pub predicted: PerformanceClass,
    pub label: PerformanceClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsArtifact {
    pub model: ModelKind,
    pub source: SourceFilter,
    pub metrics: MetricsReport,
}

pub fn evaluate_stage(exp: &Experiment) -> Result<String> {
    let c = &exp.config;
    let ds = Dataset::load(exp)?;
    ds.require_nonempty("test", &ds.split.test)?;
    let model = load_model(exp)?;
    let test_docs = ds.examples(&ds.split.test)?;
    let predictions = model.predict_all(&test_docs)?;
    let metrics = evaluate(&predictions, &ds.label_map())?;

    let rows: Vec<PredictionRow> = predictions
        .iter()
        .zip(&test_docs)
        .map(|(p, (d, y))| PredictionRow {
            id: p.id.clone(),
            ticker: d.ticker.clone(),
            date: d.date,
            p_under: p.probabilities[0],
            p_average: p.probabilities[1],
            p_over: p.probabilities[2],
            predicted: p.predicted,
            label: *y,
        })
        .collect();
    let st = stamp(exp);
    write_text(&exp.artifact(PREDICTIONS_CSV), &st, &csv_string(&rows)?)?;
    let table = format_table(
        &[(c.model.kind.display_name().to_string(), vec![Some(&metrics)])],
        &[c.source.column()],
    );
    write_text(&exp.artifact(METRICS_TXT), &st, &table)?;
    write_json(
        &exp.artifact(METRICS_JSON),
        &st,
        &MetricsArtifact {
            model: c.model.kind,
            source: c.source,
            metrics,
        },
    )?;
    Ok(table)
}

fn read_predictions(exp: &Experiment) -> Result<Vec<PredictionRow>> {
    let body = read_own_text(exp, PREDICTIONS_CSV)?;
    parse_csv(&body, &exp.artifact(PREDICTIONS_CSV))
}

// ---- simulate ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationArtifact {
    pub model: ModelKind,
    pub source: SourceFilter,
    pub firms: Vec<FirmPrediction>,
    pub report: SimulationReport,
}

pub fn simulate(exp: &Experiment) -> Result<String> {
    let c = &exp.config;
    let rows = read_predictions(exp)?;
    let mut by_ticker: BTreeMap<String, Vec<PredictionRecord>> = BTreeMap::new();
    for r in &rows {
        by_ticker
            .entry(r.ticker.clone())
            .or_default()
            .push(PredictionRecord::new(r.id.clone(), [r.p_under, r.p_average, r.p_over]));
    }
    let firms = aggregate_firm(&by_ticker);
    let prices = Prices::load(exp)?;
    let market = prices.market(c.split.horizon_days);
    let test = c.split.test_years;
    let start = NaiveDate::from_ymd_opt(test.from, 1, 1).expect("valid year");
    let end = NaiveDate::from_ymd_opt(test.to, 12, 31).expect("valid year");
    let report = simulation::simulate(&firms, &market, start, end, c.simulation.k)?;

    let st = stamp(exp);
    let table = simulation::format_table(&report);
    write_text(&exp.artifact(SIMULATION_TXT), &st, &table)?;
    let mut groups = Vec::new();
    simulation::write_group_csv(&report, &mut groups)?;
    write_text(
        &exp.artifact(SIMULATION_GROUPS_CSV),
        &st,
        std::str::from_utf8(&groups).expect("utf-8 csv"),
    )?;
    let mut series = Vec::new();
    simulation::write_series_csv(&report, &mut series)?;
    write_text(
        &exp.artifact(SIMULATION_SERIES_CSV),
        &st,
        std::str::from_utf8(&series).expect("utf-8 csv"),
    )?;
    write_json(
        &exp.artifact(SIMULATION_JSON),
        &st,
        &SimulationArtifact {
            model: c.model.kind,
            source: c.source,
            firms,
            report,
        },
    )?;
    Ok(table)
}

// ---- sweeps ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub accuracy: f64,
    pub f1: f64,
}

/// One encoder run checkpointed after every epoch. Shuffling and dropout
/// depend only on `(seed, epoch)`, so each row equals a fresh run trained
/// for that many epochs.
pub fn sweep_epochs(exp: &Experiment) -> Result<String> {
    let c = &exp.config;
    let ds = Dataset::load(exp)?;
    ds.require_nonempty("train", &ds.split.train)?;
    ds.require_nonempty("test", &ds.split.test)?;
    let train_docs = ds.examples(&ds.split.train)?;
    let test_docs = ds.examples(&ds.split.test)?;
    let labels = ds.label_map();
    let vocab = fit_vocab(exp, &train_docs)?;
    let config = EncoderConfig {
        epochs: c.sweeps.max_epoch,
        ..c.model.transformer.encoder_config(vocab.len(), c.seed)
    };
    let examples = encoder_examples(&vocab, &config, &train_docs);
    let test_seqs = encoder_examples(&vocab, &config, &test_docs);

    let mut rows = Vec::new();
    let mut reports = Vec::new();
    train_encoder_with(EncoderModel::new(config)?, &examples, |epoch, model| {
        let preds = test_docs
            .iter()
            .zip(&test_seqs)
            .map(|((d, _), (seq, _))| Ok(PredictionRecord::new(d.id.clone(), model.predict_proba(seq)?)))
            .collect::<Result<Vec<_>>>()?;
        let m = evaluate(&preds, &labels)?;
        log::info!("sweep-epochs: epoch {epoch} {}", m.cell());
        rows.push(EpochRow {
            epoch,
            accuracy: m.accuracy,
            f1: m.macro_f1,
        });
        reports.push((format!("Number of Epochs = {epoch}"), m));
        Ok(())
    })?;

    let column = format!("Performance on {}", c.source.column());
    let table_rows: Vec<(String, Vec<Option<&MetricsReport>>)> =
        reports.iter().map(|(name, m)| (name.clone(), vec![Some(m)])).collect();
    let table = format_table_with("Number of Epochs", &table_rows, &[&column]);
    let st = stamp(exp);
    write_text(&exp.artifact(SWEEP_EPOCHS_CSV), &st, &csv_string(&rows)?)?;
    write_text(&exp.artifact(SWEEP_EPOCHS_TXT), &st, &table)?;
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSizeRow {
    pub name: String,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub parameters: usize,
    pub accuracy: f64,
    pub f1: f64,
}

pub fn sweep_encoder(exp: &Experiment) -> Result<String> {
    let c = &exp.config;
    let ds = Dataset::load(exp)?;
    ds.require_nonempty("train", &ds.split.train)?;
    ds.require_nonempty("test", &ds.split.test)?;
    let train_docs = ds.examples(&ds.split.train)?;
    let test_docs = ds.examples(&ds.split.test)?;
    let labels = ds.label_map();
    let vocab = fit_vocab(exp, &train_docs)?;

    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for size in &c.sweeps.encoder_sizes {
        let EncoderSize {
            name,
            d_model,
            n_heads,
            n_layers,
            d_ff,
        } = size;
        let config = EncoderConfig {
            d_model: *d_model,
            n_heads: *n_heads,
            n_layers: *n_layers,
            d_ff: *d_ff,
            ..c.model.transformer.encoder_config(vocab.len(), c.seed)
        };
        let examples = encoder_examples(&vocab, &config, &train_docs);
        let trained = train_encoder(EncoderModel::new(config)?, &examples)?;
        let parameters = trained.model.params().parameter_count();
        let model = TrainedModel::Encoder {
            vocab: vocab.clone(),
            model: trained.model,
        };
        let m = evaluate(&model.predict_all(&test_docs)?, &labels)?;
        log::info!("sweep-encoder: {name} {}", m.cell());
        rows.push(EncoderSizeRow {
            name: name.clone(),
            d_model: *d_model,
            n_heads: *n_heads,
            n_layers: *n_layers,
            d_ff: *d_ff,
            parameters,
            accuracy: m.accuracy,
            f1: m.macro_f1,
        });
        let layers = if *n_layers == 1 { "layer" } else { "layers" };
        reports.push((format!("{name} (d{d_model}, {n_heads} heads, {n_layers} {layers})"), m));
    }

    let table_rows: Vec<(String, Vec<Option<&MetricsReport>>)> =
        reports.iter().map(|(name, m)| (name.clone(), vec![Some(m)])).collect();
    let table = format_table(&table_rows, &["Performance"]);
    let st = stamp(exp);
    write_text(&exp.artifact(SWEEP_ENCODER_CSV), &st, &csv_string(&rows)?)?;
    write_text(&exp.artifact(SWEEP_ENCODER_TXT), &st, &table)?;
    Ok(table)
}

// ---- fixture ----

pub fn fixture(exp: &Experiment) -> Result<String> {
    let spec = exp
        .config
        .fixture
        .as_ref()
        .ok_or_else(|| Error::Config("the config has no fixture section".into()))?;
    let data = generate_market(spec)?;
    let docs = exp.documents_path();
    let prices = exp.prices_path();
    for p in [&docs, &prices] {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    write_synthetic(&data, &docs, &prices)?;
    Ok(format!(
        "fixture: {} documents for {} firms -> {}, {}",
        data.corpus.len(),
        data.prices.len(),
        docs.display(),
        prices.display()
    ))
}
