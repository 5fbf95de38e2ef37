//! Synthetic data with known answers: planted-keyword text corpora, a sparse
//! separable fixture, and a full price-history plus document generator.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::baselines::LabeledVector;
use crate::corpus::{Corpus, Document, SourceKind};
use crate::error::{Error, Result};
use crate::features::SparseVector;
use crate::market::{assign_label, fit_tertiles, forward_return, write_prices, PerformanceClass, PriceBook, PriceSeries};

/// Words that carry the label, indexed by class.
pub const CLASS_KEYWORDS: [[&str; 3]; 3] = [
    ["slump", "downgrade", "losses"],
    ["steady", "inline", "unchanged"],
    ["surge", "upgrade", "record"],
];

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// `n` distinct two-syllable filler words.
pub fn filler_words(n: usize) -> Vec<String> {
    let syllables: Vec<String> = CONSONANTS
        .iter()
        .flat_map(|&c| VOWELS.iter().map(move |&v| format!("{}{}", c as char, v as char)))
        .collect();
    let s = syllables.len();
    assert!(n <= s * s, "at most {} filler words", s * s);
    (0..n).map(|i| format!("{}{}", syllables[i / s], syllables[i % s])).collect()
}

/// Documents whose keywords reveal the class with probability `signal`;
/// otherwise the keywords come from a uniformly drawn class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordFixture {
    pub n_docs: usize,
    /// Filler tokens per document.
    pub doc_len: usize,
    pub keywords_per_doc: usize,
    pub filler_vocab: usize,
    pub signal: f64,
    /// Permute labels after generation, destroying any text-label link.
    pub shuffle_labels: bool,
    pub seed: u64,
}

impl Default for KeywordFixture {
    fn default() -> Self {
        KeywordFixture {
            n_docs: 900,
            doc_len: 30,
            keywords_per_doc: 2,
            filler_vocab: 300,
            signal: 1.0,
            shuffle_labels: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledText {
    pub id: String,
    pub text: String,
    pub label: PerformanceClass,
}

fn planted_tokens(
    rng: &mut ChaCha8Rng,
    label: PerformanceClass,
    signal: f64,
    len: usize,
    keywords: usize,
    fillers: &[String],
) -> Vec<String> {
    let class = if rng.random::<f64>() < signal {
        label.index()
    } else {
        rng.random_range(0..3)
    };
    let mut tokens: Vec<String> = (0..len).map(|_| fillers.choose(rng).expect("fillers").clone()).collect();
    for _ in 0..keywords {
        let kw = CLASS_KEYWORDS[class].choose(rng).expect("keywords").to_string();
        let at = rng.random_range(0..=tokens.len());
        tokens.insert(at, kw);
    }
    tokens
}

pub fn keyword_corpus(spec: &KeywordFixture) -> Vec<LabeledText> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let fillers = filler_words(spec.filler_vocab);
    let mut labels: Vec<PerformanceClass> = (0..spec.n_docs).map(|i| PerformanceClass::ALL[i % 3]).collect();
    labels.shuffle(&mut rng);
    let mut docs: Vec<LabeledText> = labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let tokens = planted_tokens(&mut rng, label, spec.signal, spec.doc_len, spec.keywords_per_doc, &fillers);
            LabeledText {
                id: format!("kw{i:05}"),
                text: tokens.join(" "),
                label,
            }
        })
        .collect();
    if spec.shuffle_labels {
        labels.shuffle(&mut rng);
        for (d, l) in docs.iter_mut().zip(labels) {
            d.label = l;
        }
    }
    docs
}

/// One indicator feature per class plus a shared noise feature (dim 4).
pub fn separable(n_per_class: usize) -> Vec<LabeledVector> {
    let mut out = Vec::new();
    for i in 0..n_per_class {
        for (k, class) in PerformanceClass::ALL.iter().enumerate() {
            let noise = 0.1 + 0.05 * (i % 4) as f64;
            let x = SparseVector::from_pairs(4, [(k, 1.0), (3, noise)]).expect("in range");
            out.push((x, *class));
        }
    }
    out
}

/// Per-source keyword reliability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceSignal {
    pub news: f64,
    pub blogs: f64,
    pub report: f64,
}

impl SourceSignal {
    pub fn get(&self, kind: SourceKind) -> f64 {
        match kind {
            SourceKind::News => self.news,
            SourceKind::Blog => self.blogs,
            SourceKind::Report => self.report,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_firms: usize,
    pub first_year: i32,
    pub last_year: i32,
    pub news_per_year: usize,
    pub blogs_per_year: usize,
    pub reports_per_year: usize,
    pub report_paragraphs: usize,
    pub doc_len: usize,
    pub filler_vocab: usize,
    pub signal: SourceSignal,
    /// Standard deviation of each firm's annualized log drift, redrawn yearly.
    pub drift_std: f64,
    pub daily_vol: f64,
    pub horizon_days: i64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_firms: 30,
            first_year: 2012,
            last_year: 2020,
            news_per_year: 8,
            blogs_per_year: 5,
            reports_per_year: 1,
            report_paragraphs: 4,
            doc_len: 30,
            filler_vocab: 400,
            signal: SourceSignal {
                news: 0.9,
                blogs: 0.6,
                report: 0.35,
            },
            drift_std: 0.3,
            daily_vol: 0.012,
            horizon_days: 365,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub corpus: Corpus,
    pub prices: PriceBook,
    /// Label used when planting keywords, by document id.
    pub planted: BTreeMap<String, PerformanceClass>,
}

pub fn ticker_name(i: usize) -> String {
    let a = (b'A' + (i / 676 % 26) as u8) as char;
    let b = (b'A' + (i / 26 % 26) as u8) as char;
    let c = (b'A' + (i % 26) as u8) as char;
    format!("{a}{b}{c}")
}

fn business_days(from: NaiveDate, to: NaiveDate) -> Vec<NaiveDate> {
    let mut out = Vec::new();
    let mut d = from;
    while d <= to {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

/// Geometric random walks on business days plus documents whose keywords
/// follow each document's realized one-year abnormal-return tertile.
pub fn generate_market(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    if cfg.n_firms < 3 || cfg.last_year < cfg.first_year {
        return Err(Error::Config("synthetic market needs 3+ firms and a nonempty year range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start = NaiveDate::from_ymd_opt(cfg.first_year - 1, 1, 1).expect("valid year");
    let end = NaiveDate::from_ymd_opt(cfg.last_year + 1, 12, 31).expect("valid year") + Duration::days(60);
    let days = business_days(start, end);
    let drift = Normal::new(0.0, cfg.drift_std).map_err(|e| Error::Config(e.to_string()))?;

    let mut prices = PriceBook::new();
    for f in 0..cfg.n_firms {
        let ticker = ticker_name(f);
        let z: f64 = StandardNormal.sample(&mut rng);
        let mut log_p = (50.0f64).ln() + 0.5 * z;
        let mut year = 0;
        let mut mu = 0.0;
        let mut points = Vec::with_capacity(days.len());
        for &d in &days {
            if d.year() != year {
                year = d.year();
                mu = drift.sample(&mut rng);
            }
            let eps: f64 = StandardNormal.sample(&mut rng);
            log_p += mu / 252.0 + cfg.daily_vol * eps;
            points.push((d, (log_p.exp() * 1e4).round() / 1e4));
        }
        prices.insert(ticker.clone(), PriceSeries::new(ticker, points)?);
    }

    struct Draft {
        ticker: String,
        date: NaiveDate,
        source: SourceKind,
    }
    let mut drafts = Vec::new();
    for ticker in prices.keys() {
        for year in cfg.first_year..=cfg.last_year {
            let in_year: Vec<NaiveDate> = days.iter().copied().filter(|d| d.year() == year).collect();
            for (source, count) in [
                (SourceKind::News, cfg.news_per_year),
                (SourceKind::Blog, cfg.blogs_per_year),
                (SourceKind::Report, cfg.reports_per_year),
            ] {
                for _ in 0..count {
                    let date = *in_year.choose(&mut rng).expect("business days in year");
                    drafts.push(Draft {
                        ticker: ticker.clone(),
                        date,
                        source,
                    });
                }
            }
        }
    }

    let mut market_cache: BTreeMap<NaiveDate, f64> = BTreeMap::new();
    let mut abnormal = Vec::with_capacity(drafts.len());
    for d in &drafts {
        let m = match market_cache.get(&d.date) {
            Some(&m) => m,
            None => {
                let m = crate::market::market_return(&prices, d.date, cfg.horizon_days)?;
                market_cache.insert(d.date, m);
                m
            }
        };
        let r = forward_return(&prices[&d.ticker], d.date, cfg.horizon_days).ok_or_else(|| Error::Unlabelable {
            ticker: d.ticker.clone(),
            date: d.date,
        })?;
        abnormal.push(r - m);
    }
    let breakpoints = fit_tertiles(&abnormal, "synthetic")?;

    let fillers = filler_words(cfg.filler_vocab);
    let mut docs = Vec::with_capacity(drafts.len());
    let mut planted = BTreeMap::new();
    for (d, &r) in drafts.iter().zip(&abnormal) {
        let label = assign_label(r, &breakpoints);
        let signal = cfg.signal.get(d.source);
        let text = if d.source == SourceKind::Report {
            (0..cfg.report_paragraphs.max(1))
                .map(|_| planted_tokens(&mut rng, label, signal, cfg.doc_len.max(50), 1, &fillers).join(" "))
                .collect::<Vec<_>>()
                .join("\n\n")
        } else {
            planted_tokens(&mut rng, label, signal, cfg.doc_len, 2, &fillers).join(" ")
        };
        let id = Document::derive_id(&d.ticker, d.date, &text);
        if planted.contains_key(&id) {
            continue;
        }
        planted.insert(id.clone(), label);
        docs.push(Document {
            id,
            ticker: d.ticker.clone(),
            date: d.date,
            source: d.source,
            title: format!("{} {} {}", d.ticker, d.source, d.date),
            text,
        });
    }
    docs.sort_by(|a, b| (a.date, &a.ticker, &a.id).cmp(&(b.date, &b.ticker, &b.id)));
    Ok(SyntheticData {
        corpus: Corpus::new(docs)?,
        prices,
        planted,
    })
}

/// Writes `documents.csv` and `prices.csv` style files.
pub fn write_synthetic(data: &SyntheticData, documents: &Path, prices: &Path) -> Result<()> {
    let mut doc_buf = Vec::new();
    data.corpus.write_csv(&mut doc_buf)?;
    std::fs::write(documents, doc_buf).map_err(|e| Error::io(documents, e))?;
    let mut price_buf = Vec::new();
    write_prices(&data.prices, &mut price_buf)?;
    std::fs::write(prices, price_buf).map_err(|e| Error::io(prices, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::tokenize;

    #[test]
    fn filler_words_are_distinct_tokens() {
        let w = filler_words(500);
        let mut sorted = w.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 500);
        for word in &w {
            assert_eq!(tokenize(word), vec![word.clone()]);
        }
        for kws in CLASS_KEYWORDS {
            assert!(kws.iter().all(|k| !w.contains(&k.to_string())));
        }
    }

    #[test]
    fn full_signal_plants_true_class_keywords() {
        let docs = keyword_corpus(&KeywordFixture {
            n_docs: 60,
            ..Default::default()
        });
        let counts = PerformanceClass::ALL.map(|c| docs.iter().filter(|d| d.label == c).count());
        assert_eq!(counts, [20, 20, 20]);
        for d in &docs {
            let toks = tokenize(&d.text);
            assert_eq!(toks.len(), 32);
            assert!(toks.iter().any(|t| CLASS_KEYWORDS[d.label.index()].contains(&t.as_str())));
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let a = keyword_corpus(&KeywordFixture {
            n_docs: 30,
            signal: 0.5,
            ..Default::default()
        });
        let b = keyword_corpus(&KeywordFixture {
            n_docs: 30,
            signal: 0.5,
            ..Default::default()
        });
        assert_eq!(a, b);
    }

    #[test]
    fn synthetic_market_is_labelable_and_balanced() {
        let cfg = SyntheticConfig {
            n_firms: 6,
            first_year: 2015,
            last_year: 2016,
            ..Default::default()
        };
        let data = generate_market(&cfg).unwrap();
        assert_eq!(data.prices.len(), 6);
        assert_eq!(data.corpus.len(), data.planted.len());
        let n = data.planted.len();
        for c in PerformanceClass::ALL {
            let k = data.planted.values().filter(|&&l| l == c).count();
            assert!(k * 3 + 6 >= n && k * 3 <= n + 6, "{c}: {k} of {n}");
        }
        for doc in data.corpus.iter() {
            assert!(forward_return(&data.prices[&doc.ticker], doc.date, 365).is_some());
        }
        let reports = data.corpus.retain_source(SourceKind::Report).expand_reports(200);
        assert_eq!(reports.len(), 6 * 2 * 4);
    }
}
