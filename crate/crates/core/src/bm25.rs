//! Okapi BM25 over the dataset corpus.

use std::collections::HashMap;

use thiserror::Error;

use crate::model::{canonical_order, Dataset, ListError, Mode, RankedList, RunSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Bm25Error {
    #[error("cannot index an empty corpus")]
    EmptyCorpus,
    #[error("invalid parameters: k1 = {k1}, b = {b} (need k1 >= 0 and 0 <= b <= 1)")]
    InvalidParams { k1: f64, b: f64 },
    #[error("top_k must be at least 1")]
    ZeroTopK,
    #[error(transparent)]
    List(#[from] ListError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<(), Bm25Error> {
        // NaN fails both comparisons.
        if self.k1 >= 0.0 && (0.0..=1.0).contains(&self.b) && self.k1.is_finite() {
            Ok(())
        } else {
            Err(Bm25Error::InvalidParams { k1: self.k1, b: self.b })
        }
    }
}

/// Han, Hiragana, Katakana and Hangul codepoints, emitted one per token.
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF      // Hiragana, Katakana
        | 0x31F0..=0x31FF    // Katakana phonetic extensions
        | 0x3400..=0x4DBF    // CJK extension A
        | 0x4E00..=0x9FFF    // CJK unified ideographs
        | 0xF900..=0xFAFF    // CJK compatibility ideographs
        | 0x1100..=0x11FF    // Hangul jamo
        | 0x3130..=0x318F    // Hangul compatibility jamo
        | 0xAC00..=0xD7AF    // Hangul syllables
        | 0xFF66..=0xFF9F    // halfwidth Katakana
        | 0x20000..=0x2FA1F  // supplementary ideographic planes
    )
}

/// Lowercased maximal runs of letters and digits; every CJK codepoint is its
/// own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if is_cjk(c) {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(c.to_lowercase().collect());
        } else if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    /// term -> (doc ordinal, term frequency), ascending by ordinal.
    postings: HashMap<String, Vec<(u32, u32)>>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    doc_ids: Vec<String>,
}

impl InvertedIndex {
    /// Indexes documents in the given order; ordinals follow that order.
    pub fn build<I, S, T>(documents: I) -> Result<Self, Bm25Error>
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: AsRef<str>,
    {
        let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();
        let mut doc_lengths = Vec::new();
        let mut doc_ids = Vec::new();
        for (ord, (id, text)) in documents.into_iter().enumerate() {
            let ord = ord as u32;
            let tokens = tokenize(text.as_ref());
            doc_lengths.push(tokens.len() as u32);
            doc_ids.push(id.into());
            for tok in tokens {
                let list = postings.entry(tok).or_default();
                match list.last_mut() {
                    Some((o, tf)) if *o == ord => *tf += 1,
                    _ => list.push((ord, 1)),
                }
            }
        }
        if doc_ids.is_empty() {
            return Err(Bm25Error::EmptyCorpus);
        }
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        let avg_doc_length = total as f64 / doc_lengths.len() as f64;
        Ok(InvertedIndex { postings, doc_lengths, avg_doc_length, doc_ids })
    }

    /// Indexes every document of the dataset in `doc_id` order.
    pub fn from_dataset(dataset: &Dataset) -> Result<Self, Bm25Error> {
        Self::build(dataset.documents.values().map(|d| (d.doc_id.as_str(), d.text.as_str())))
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn postings(&self, term: &str) -> &[(u32, u32)] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn idf(&self, term: &str) -> f64 {
        idf(self.doc_count(), self.postings(term).len())
    }

    /// BM25 score of one document. Repeated query terms contribute once per
    /// occurrence.
    pub fn score(&self, params: &Bm25Params, query_terms: &[String], doc_ordinal: usize) -> f64 {
        let len = self.doc_lengths[doc_ordinal] as f64;
        let mut total = 0.0;
        for term in query_terms {
            let postings = self.postings(term);
            if let Ok(i) = postings.binary_search_by_key(&(doc_ordinal as u32), |p| p.0) {
                let idf = idf(self.doc_count(), postings.len());
                total += term_weight(params, idf, postings[i].1 as f64, len, self.avg_doc_length);
            }
        }
        total
    }

    /// Scores of every document, indexed by ordinal.
    pub fn score_all(&self, params: &Bm25Params, query_terms: &[String]) -> Vec<f64> {
        let mut scores = vec![0.0; self.doc_count()];
        for term in query_terms {
            let postings = self.postings(term);
            if postings.is_empty() {
                continue;
            }
            let idf = idf(self.doc_count(), postings.len());
            for &(ord, tf) in postings {
                let len = self.doc_lengths[ord as usize] as f64;
                scores[ord as usize] += term_weight(params, idf, tf as f64, len, self.avg_doc_length);
            }
        }
        scores
    }

    /// Top `top_k` documents for `query_text` as a canonical list.
    pub fn search(
        &self,
        params: &Bm25Params,
        query_key: &str,
        mode: Mode,
        query_text: &str,
        top_k: usize,
    ) -> Result<RankedList, Bm25Error> {
        if top_k == 0 {
            return Err(Bm25Error::ZeroTopK);
        }
        let terms = tokenize(query_text);
        let scores = self.score_all(params, &terms);
        let mut entries: Vec<(String, f64)> =
            self.doc_ids.iter().cloned().zip(scores).collect();
        if entries.len() > top_k {
            entries.select_nth_unstable_by(top_k - 1, canonical_order);
            entries.truncate(top_k);
        }
        Ok(RankedList::new(query_key, mode, entries)?)
    }
}

pub fn idf(doc_count: usize, df: usize) -> f64 {
    let n = doc_count as f64;
    let df = df as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

pub fn term_weight(params: &Bm25Params, idf: f64, tf: f64, len: f64, avg_len: f64) -> f64 {
    let norm = 1.0 - params.b + params.b * len / avg_len;
    idf * tf * (params.k1 + 1.0) / (tf + params.k1 * norm)
}

/// Original lists from core text (keyed by core id), instructed and reversed
/// lists from the instructed and reversed texts (keyed by query id).
pub fn run_all_modes(
    dataset: &Dataset,
    params: &Bm25Params,
    top_k: usize,
    system_id: &str,
) -> Result<RunSet, Bm25Error> {
    params.validate()?;
    let index = InvertedIndex::from_dataset(dataset)?;
    let mut run = RunSet::new(system_id);
    let mut push = |list: RankedList| {
        run.insert(list).expect("dataset ids are unique per mode");
    };
    for core in dataset.core_queries.values() {
        push(index.search(params, &core.core_id, Mode::Original, &core.text, top_k)?);
    }
    for iq in dataset.instructed_queries.values() {
        push(index.search(params, &iq.query_id, Mode::Instructed, &iq.instructed_text, top_k)?);
        push(index.search(params, &iq.query_id, Mode::Reversed, &iq.reversed_text, top_k)?);
    }
    Ok(run)
}
