//! Bag-of-words tokenization and TF-IDF vectors.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_TOKEN: &str = "<num>";
pub const DEFAULT_MAX_VOCAB: usize = 50_000;
pub const DEFAULT_MIN_DF: usize = 2;

/// Lowercases, splits on non-alphanumerics, maps digit runs to `<num>` and
/// drops single-character tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|piece| !piece.is_empty())
        .filter_map(|piece| {
            if piece.chars().all(|c| c.is_numeric()) {
                return Some(NUM_TOKEN.to_string());
            }
            let lower = piece.to_lowercase();
            (lower.chars().count() > 1).then_some(lower)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    terms: Vec<String>,
    doc_freq: Vec<usize>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    terms: Vec<String>,
    doc_freq: Vec<usize>,
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = Error;

    fn try_from(r: VocabularyRepr) -> Result<Self> {
        Vocabulary::new(r.terms, r.doc_freq)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            terms: v.terms,
            doc_freq: v.doc_freq,
        }
    }
}

impl Vocabulary {
    pub fn new(terms: Vec<String>, doc_freq: Vec<usize>) -> Result<Self> {
        if terms.len() != doc_freq.len() {
            return Err(Error::Data("vocabulary terms and frequencies differ in length".into()));
        }
        let index: HashMap<String, usize> = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if index.len() != terms.len() {
            return Err(Error::Data("duplicate vocabulary term".into()));
        }
        Ok(Vocabulary {
            terms,
            doc_freq,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn doc_freq(&self) -> &[usize] {
        &self.doc_freq
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    /// Indices of the `k` most frequent terms (df descending, then term).
    pub fn top_by_df(&self, k: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.terms.len()).collect();
        order.sort_by(|&a, &b| {
            self.doc_freq[b]
                .cmp(&self.doc_freq[a])
                .then_with(|| self.terms[a].cmp(&self.terms[b]))
        });
        order.truncate(k);
        order
    }
}

/// Sparse vector with strictly increasing indices and nonzero values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub dim: usize,
    pub entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        SparseVector { dim, entries: Vec::new() }
    }

    /// Builds from unsorted pairs, summing duplicates and dropping zeros.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for (i, v) in pairs {
            if i >= dim {
                return Err(Error::Usage(format!("index {i} out of range for dimension {dim}")));
            }
            *acc.entry(i).or_insert(0.0) += v;
        }
        Ok(SparseVector {
            dim,
            entries: acc.into_iter().filter(|(_, v)| *v != 0.0).collect(),
        })
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * dense[i]).sum()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map(|k| self.entries[k].1)
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    pub vocabulary: Vocabulary,
    pub idf: Vec<f64>,
    pub n_docs: usize,
}

/// Fits the vocabulary and smoothed idf weights `ln((1+N)/(1+df)) + 1`.
///
/// Keeps terms with `df >= min_df`, then the `max_vocab` most frequent
/// (df descending, ties by term).
pub fn fit<S: AsRef<str>>(documents: &[Vec<S>], max_vocab: usize, min_df: usize) -> Result<TfidfModel> {
    if documents.is_empty() {
        return Err(Error::Data("cannot fit TF-IDF on an empty corpus".into()));
    }
    let mut df: HashMap<&str, usize> = HashMap::new();
    for doc in documents {
        let mut seen: Vec<&str> = doc.iter().map(AsRef::as_ref).collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = df.into_iter().filter(|&(_, c)| c >= min_df).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    kept.truncate(max_vocab);

    let n = documents.len();
    let idf = kept
        .iter()
        .map(|&(_, c)| ((1.0 + n as f64) / (1.0 + c as f64)).ln() + 1.0)
        .collect();
    let vocabulary = Vocabulary::new(
        kept.iter().map(|(t, _)| t.to_string()).collect(),
        kept.iter().map(|&(_, c)| c).collect(),
    )?;
    Ok(TfidfModel {
        vocabulary,
        idf,
        n_docs: n,
    })
}

impl TfidfModel {
    /// Raw count times idf, L2-normalized; unknown tokens are ignored.
    pub fn transform<S: AsRef<str>>(&self, tokens: &[S]) -> SparseVector {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for t in tokens {
            if let Some(i) = self.vocabulary.get(t.as_ref()) {
                *counts.entry(i).or_insert(0.0) += 1.0;
            }
        }
        let mut entries: Vec<(usize, f64)> = counts.into_iter().map(|(i, c)| (i, c * self.idf[i])).collect();
        let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, v) in &mut entries {
                *v /= norm;
            }
        }
        SparseVector {
            dim: self.vocabulary.len(),
            entries,
        }
    }

    pub fn dim(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tfidf model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: TfidfModel = serde_json::from_str(s)?;
        if model.idf.len() != model.vocabulary.len() {
            return Err(Error::Data("idf length differs from vocabulary".into()));
        }
        Ok(model)
    }
}
