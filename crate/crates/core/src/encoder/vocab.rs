use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SPECIAL_TOKENS: [&str; 3] = ["[PAD]", "[UNK]", "[CLS]"];

/// Word-level vocabulary; ids 0..3 are `[PAD]`, `[UNK]`, `[CLS]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct TokenVocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl TryFrom<Vec<String>> for TokenVocab {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 3 || tokens[..3] != SPECIAL_TOKENS {
            return Err(Error::Data("token vocabulary must start with [PAD], [UNK], [CLS]".into()));
        }
        let index: HashMap<String, u32> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        if index.len() != tokens.len() {
            return Err(Error::Data("duplicate token in vocabulary".into()));
        }
        Ok(TokenVocab { tokens, index })
    }
}

impl From<TokenVocab> for Vec<String> {
    fn from(v: TokenVocab) -> Self {
        v.tokens
    }
}

impl TokenVocab {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// `[CLS]` followed by the first `max_seq_len - 1` token ids.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S], max_seq_len: usize) -> TokenSequence {
        let mut ids = Vec::with_capacity(max_seq_len.min(tokens.len() + 1));
        ids.push(CLS_ID);
        ids.extend(tokens.iter().take(max_seq_len.saturating_sub(1)).map(|t| self.id(t.as_ref())));
        let mask = vec![1u8; ids.len()];
        TokenSequence { ids, mask }
    }
}

/// Builds a vocabulary from training documents only: the `vocab_cap` most
/// frequent tokens, ties broken lexicographically.
pub fn build_vocab<S: AsRef<str>>(documents: &[Vec<S>], vocab_cap: usize) -> Result<TokenVocab> {
    if documents.is_empty() {
        return Err(Error::Data("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for doc in documents {
        for t in doc {
            *counts.entry(t.as_ref()).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(t, _)| !SPECIAL_TOKENS.contains(t))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(vocab_cap);
    let tokens: Vec<String> = SPECIAL_TOKENS
        .iter()
        .map(|s| s.to_string())
        .chain(ranked.into_iter().map(|(t, _)| t.to_string()))
        .collect();
    TokenVocab::try_from(tokens)
}

/// Token ids starting with `[CLS]` and a 1/0 attention mask with padding
/// only at the end.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    ids: Vec<u32>,
    mask: Vec<u8>,
}

impl TokenSequence {
    pub fn new(ids: Vec<u32>, mask: Vec<u8>) -> Result<Self> {
        if ids.is_empty() || ids[0] != CLS_ID {
            return Err(Error::Usage("sequence must start with [CLS]".into()));
        }
        if ids.len() != mask.len() {
            return Err(Error::Usage("ids and mask differ in length".into()));
        }
        if mask[0] != 1 || mask.iter().any(|&m| m > 1) || mask.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Usage("mask must be 1s followed by 0s".into()));
        }
        Ok(TokenSequence { ids, mask })
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn mask(&self) -> &[u8] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn real_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }

    /// Pads with `[PAD]` up to `len` positions.
    pub fn padded(&self, len: usize) -> TokenSequence {
        let mut s = self.clone();
        while s.ids.len() < len {
            s.ids.push(PAD_ID);
            s.mask.push(0);
        }
        s
    }

    /// Keeps the first `len` positions.
    pub fn truncated(&self, len: usize) -> TokenSequence {
        let len = len.max(1);
        TokenSequence {
            ids: self.ids[..self.ids.len().min(len)].to_vec(),
            mask: self.mask[..self.mask.len().min(len)].to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn frequency_ordered_ids() {
        let v = build_vocab(&[toks("aa aa bb")], 10).unwrap();
        assert_eq!(v.id("aa"), 3);
        assert_eq!(v.id("bb"), 4);
        assert_eq!(v.id("never"), UNK_ID);
        assert_eq!(v.len(), 5);
        assert!(build_vocab::<String>(&[], 10).is_err());
    }

    #[test]
    fn cap_and_ties() {
        let v = build_vocab(&[toks("zz yy xx xx")], 2).unwrap();
        assert_eq!(v.tokens()[3..], ["xx".to_string(), "yy".to_string()]);
    }

    #[test]
    fn encode_truncates_after_cls() {
        let v = build_vocab(&[toks("aa bb cc")], 10).unwrap();
        let s = v.encode(&toks("aa bb cc dd"), 3);
        assert_eq!(s.ids(), &[CLS_ID, v.id("aa"), v.id("bb")]);
        let p = s.padded(5);
        assert_eq!(p.mask(), &[1, 1, 1, 0, 0]);
        assert_eq!(p.real_len(), 3);
        assert!(TokenSequence::new(vec![CLS_ID, 3, 0], vec![1, 0, 1]).is_err());
        assert!(TokenSequence::new(vec![3, 3], vec![1, 1]).is_err());
    }

    #[test]
    fn serde_roundtrip() {
        let v = build_vocab(&[toks("aa bb")], 10).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        let back: TokenVocab = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        assert!(serde_json::from_str::<TokenVocab>("[\"a\"]").is_err());
    }
}
