//! Document ingestion and corpus shaping.
//!
//! Input is either CSV (header `ticker,date,source,title,text`, optional
//! leading `id` column) or JSON Lines with the same field names. Annual
//! reports arrive as whole filings and are broken into paragraph documents
//! with [`Corpus::expand_reports`].

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Paragraphs shorter than this are treated as boilerplate.
pub const DEFAULT_PARAGRAPH_MIN_CHARS: usize = 200;
/// Coverage floor below which a selected firm is reported.
pub const DEFAULT_MIN_ITEMS: usize = 170;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceKind {
    #[serde(rename = "news")]
    News,
    #[serde(rename = "blogs")]
    Blog,
    #[serde(rename = "report")]
    Report,
}

impl SourceKind {
    pub const ALL: [SourceKind; 3] = [SourceKind::News, SourceKind::Blog, SourceKind::Report];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::News => "news",
            SourceKind::Blog => "blogs",
            SourceKind::Report => "report",
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "news" => Ok(SourceKind::News),
            "blogs" => Ok(SourceKind::Blog),
            "report" => Ok(SourceKind::Report),
            other => Err(Error::Data(format!("unknown source kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub ticker: String,
    pub date: NaiveDate,
    pub source: SourceKind,
    pub title: String,
    pub text: String,
}

impl Document {
    /// Content-derived id used when the input carries none.
    pub fn derive_id(ticker: &str, date: NaiveDate, text: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(ticker.as_bytes());
        hasher.update([0u8]);
        hasher.update(date.to_string().as_bytes());
        hasher.update([0u8]);
        hasher.update(text.as_bytes());
        let digest = hasher.finalize();
        format!("{}-{}", ticker, hex::encode(&digest[..8]))
    }
}

pub fn is_valid_ticker(ticker: &str) -> bool {
    (1..=6).contains(&ticker.len()) && ticker.bytes().all(|b| b.is_ascii_uppercase() || b == b'.')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocumentFormat {
    Csv,
    Jsonl,
}

impl DocumentFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(DocumentFormat::Csv),
            Some("jsonl") | Some("json") | Some("ndjson") => Ok(DocumentFormat::Jsonl),
            _ => Err(Error::Usage(format!(
                "cannot infer document format from {}; expected .csv or .jsonl",
                path.display()
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    /// Inclusive range every document date must fall in.
    pub date_range: (NaiveDate, NaiveDate),
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            date_range: (
                NaiveDate::from_ymd_opt(1900, 1, 1).unwrap(),
                NaiveDate::from_ymd_opt(2100, 12, 31).unwrap(),
            ),
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    #[serde(default)]
    id: Option<String>,
    ticker: String,
    date: String,
    source: String,
    #[serde(default)]
    title: Option<String>,
    text: String,
}

/// Immutable, id-indexed collection of documents.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    docs: Vec<Document>,
    by_id: BTreeMap<String, usize>,
    by_ticker: BTreeMap<String, Vec<usize>>,
}

impl Corpus {
    pub fn new(docs: Vec<Document>) -> Result<Self> {
        let mut by_id = BTreeMap::new();
        let mut by_ticker: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, doc) in docs.iter().enumerate() {
            if by_id.insert(doc.id.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate document id {}", doc.id)));
            }
            by_ticker.entry(doc.ticker.clone()).or_default().push(i);
        }
        Ok(Corpus {
            docs,
            by_id,
            by_ticker,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.by_id.get(id).map(|&i| &self.docs[i])
    }

    pub fn tickers(&self) -> impl Iterator<Item = &str> {
        self.by_ticker.keys().map(String::as_str)
    }

    pub fn ids_for(&self, ticker: &str) -> Vec<&str> {
        self.by_ticker
            .get(ticker)
            .map(|idx| idx.iter().map(|&i| self.docs[i].id.as_str()).collect())
            .unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Document> {
        self.docs.iter()
    }

    fn filtered(&self, keep: impl Fn(&Document) -> bool) -> Corpus {
        let docs = self.docs.iter().filter(|d| keep(d)).cloned().collect();
        // ids stay unique under filtering
        Corpus::new(docs).expect("subset of a valid corpus")
    }

    pub fn retain_tickers(&self, tickers: &BTreeSet<String>) -> Corpus {
        self.filtered(|d| tickers.contains(&d.ticker))
    }

    pub fn retain_source(&self, source: SourceKind) -> Corpus {
        self.filtered(|d| d.source == source)
    }

    /// Replaces every report document by its paragraphs (ids `<id>-p<k>`).
    pub fn expand_reports(&self, min_chars: usize) -> Corpus {
        let mut docs = Vec::with_capacity(self.docs.len());
        for doc in &self.docs {
            if doc.source != SourceKind::Report {
                docs.push(doc.clone());
                continue;
            }
            for (k, paragraph) in split_report_paragraphs(&doc.text, min_chars)
                .into_iter()
                .enumerate()
            {
                docs.push(Document {
                    id: format!("{}-p{:04}", doc.id, k),
                    text: paragraph,
                    ..doc.clone()
                });
            }
        }
        Corpus::new(docs).expect("paragraph ids derive from unique ids")
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for doc in &self.docs {
            serde_json::to_writer(&mut out, doc)?;
            out.write_all(b"\n").map_err(|e| Error::io("<jsonl>", e))?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Data(format!("csv write: {e}"));
        writer
            .write_record(["id", "ticker", "date", "source", "title", "text"])
            .map_err(csv_err)?;
        for d in &self.docs {
            writer
                .write_record([
                    d.id.as_str(),
                    d.ticker.as_str(),
                    &d.date.to_string(),
                    d.source.as_str(),
                    d.title.as_str(),
                    d.text.as_str(),
                ])
                .map_err(csv_err)?;
        }
        writer.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Per-source and per-year document counts.
    pub fn stats(&self) -> CorpusStats {
        let mut by_source = BTreeMap::new();
        let mut by_year = BTreeMap::new();
        for d in &self.docs {
            *by_source.entry(d.source.as_str().to_string()).or_insert(0) += 1;
            *by_year.entry(d.date.year()).or_insert(0) += 1;
        }
        CorpusStats {
            documents: self.docs.len(),
            tickers: self.by_ticker.len(),
            by_source,
            by_year,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub documents: usize,
    pub tickers: usize,
    pub by_source: BTreeMap<String, usize>,
    pub by_year: BTreeMap<i32, usize>,
}

pub fn load_documents(path: &Path, format: DocumentFormat) -> Result<Corpus> {
    load_documents_with(path, format, LoadOptions::default())
}

pub fn load_documents_with(path: &Path, format: DocumentFormat, opts: LoadOptions) -> Result<Corpus> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_documents(file, format, path, opts)
}

/// Parses documents from any reader; `origin` only labels error messages.
pub fn read_documents<R: Read>(
    reader: R,
    format: DocumentFormat,
    origin: &Path,
    opts: LoadOptions,
) -> Result<Corpus> {
    let raw = match format {
        DocumentFormat::Csv => read_csv_records(reader, origin)?,
        DocumentFormat::Jsonl => read_jsonl_records(reader, origin)?,
    };

    let mut seen: HashSet<(String, NaiveDate, String)> = HashSet::new();
    let mut docs = Vec::with_capacity(raw.len());
    for (line, rec) in raw {
        let at = |message: String| Error::DataAt {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let ticker = rec.ticker.trim().to_uppercase();
        if !is_valid_ticker(&ticker) {
            return Err(at(format!("invalid ticker {:?}", rec.ticker)));
        }
        let date = NaiveDate::parse_from_str(rec.date.trim(), "%Y-%m-%d")
            .map_err(|e| at(format!("invalid date {:?}: {e}", rec.date)))?;
        if date < opts.date_range.0 || date > opts.date_range.1 {
            return Err(at(format!("date {date} outside corpus range")));
        }
        let source: SourceKind = rec.source.parse().map_err(|e: Error| at(e.to_string()))?;
        if rec.text.trim().is_empty() {
            return Err(at("empty text".to_string()));
        }
        if !seen.insert((ticker.clone(), date, rec.text.clone())) {
            continue;
        }
        let id = match rec.id {
            Some(id) if !id.trim().is_empty() => id.trim().to_string(),
            _ => Document::derive_id(&ticker, date, &rec.text),
        };
        docs.push(Document {
            id,
            ticker,
            date,
            source,
            title: rec.title.unwrap_or_default(),
            text: rec.text,
        });
    }
    Corpus::new(docs)
}

fn read_csv_records<R: Read>(reader: R, origin: &Path) -> Result<Vec<(u64, RawRecord)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).comment(Some(b'#')).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Data(format!("{}: unreadable header: {e}", origin.display())))?
        .clone();
    for required in ["ticker", "date", "source", "title", "text"] {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::DataAt {
                path: origin.to_path_buf(),
                line: 1,
                message: format!("missing required column {required:?}"),
            });
        }
    }
    let mut out = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let malformed = |line: u64, e: csv::Error| Error::DataAt {
            path: origin.to_path_buf(),
            line,
            message: format!("malformed row: {e}"),
        };
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map(|p| p.line()).unwrap_or(0);
                let rec: RawRecord = record
                    .deserialize(Some(&headers))
                    .map_err(|e| malformed(line, e))?;
                out.push((line, rec));
            }
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                return Err(malformed(line, e));
            }
        }
    }
    Ok(out)
}

fn read_jsonl_records<R: Read>(reader: R, origin: &Path) -> Result<Vec<(u64, RawRecord)>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = i as u64 + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord = serde_json::from_str(&line).map_err(|e| Error::DataAt {
            path: origin.to_path_buf(),
            line: lineno,
            message: format!("malformed record: {e}"),
        })?;
        out.push((lineno, rec));
    }
    Ok(out)
}

/// Splits a filing into paragraphs separated by two or more newlines.
///
/// Paragraphs are trimmed and dropped when shorter than `min_chars`
/// characters; every kept paragraph is a contiguous slice of the input.
pub fn split_report_paragraphs(report_text: &str, min_chars: usize) -> Vec<String> {
    let bytes = report_text.as_bytes();
    let mut paragraphs = Vec::new();
    let mut keep = |piece: &str| {
        let piece = piece.trim();
        if !piece.is_empty() && piece.chars().count() >= min_chars {
            paragraphs.push(piece.to_string());
        }
    };

    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'\n' && bytes[i] != b'\r' {
            i += 1;
            continue;
        }
        let run_start = i;
        let mut newlines = 0;
        while i < bytes.len() && (bytes[i] == b'\n' || bytes[i] == b'\r') {
            if bytes[i] == b'\n' {
                newlines += 1;
            }
            i += 1;
        }
        if newlines >= 2 {
            keep(&report_text[start..run_start]);
            start = i;
        }
    }
    keep(&report_text[start..]);
    paragraphs
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageSelection {
    pub tickers: BTreeSet<String>,
    /// News+blog document count per selected ticker.
    pub counts: BTreeMap<String, usize>,
    pub warnings: Vec<String>,
}

/// Picks the `n` tickers with the most news and blog coverage.
///
/// Ties resolve in lexicographic ticker order. Selected tickers below
/// `min_items` are kept but reported in `warnings`.
pub fn select_top_covered(corpus: &Corpus, n: usize, min_items: usize) -> Result<CoverageSelection> {
    if n == 0 {
        return Err(Error::Usage("select_top_covered: n must be at least 1".into()));
    }
    let mut counts: BTreeMap<&str, usize> = corpus.tickers().map(|t| (t, 0)).collect();
    for d in corpus.iter() {
        if d.source != SourceKind::Report {
            *counts.get_mut(d.ticker.as_str()).unwrap() += 1;
        }
    }
    if counts.len() < n {
        return Err(Error::Data(format!(
            "corpus has {} tickers, fewer than the {} requested",
            counts.len(),
            n
        )));
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(n);

    let warnings = ranked
        .iter()
        .filter(|(_, c)| *c < min_items)
        .map(|(t, c)| format!("{t} has {c} news/blog items, below the floor of {min_items}"))
        .collect();
    Ok(CoverageSelection {
        tickers: ranked.iter().map(|(t, _)| t.to_string()).collect(),
        counts: ranked.iter().map(|(t, c)| (t.to_string(), *c)).collect(),
        warnings,
    })
}

pub fn filter_years(corpus: &Corpus, from_year: i32, to_year: i32) -> Corpus {
    corpus.filtered(|d| (from_year..=to_year).contains(&d.date.year()))
}
