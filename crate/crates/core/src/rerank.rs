//! List-wise reranker prompt rendering and output parsing, plus point-wise
//! probability lists.
//!
//! No model is called here; callers send [`ListwisePrompt::rendered`] to a
//! model and feed the reply to [`parse_listwise_ranking`].

use std::collections::HashMap;

use thiserror::Error;

use crate::model::{ListError, RankedList};

pub const MAX_PASSAGES: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RerankError {
    #[error("no passages to rank")]
    EmptyPassages,
    #[error("{count} passages exceeds the limit of {MAX_PASSAGES}")]
    TooManyPassages { count: usize },
    #[error("no valid passage identifier in model output: {0:?}")]
    Unparseable(String),
    #[error("not a permutation of 1..={len}: {reason}")]
    BadPermutation { len: usize, reason: String },
    #[error("candidate {0} has no score")]
    MissingScore(String),
    #[error("candidate {doc_id} has score {score} outside [0, 1]")]
    ScoreOutOfRange { doc_id: String, score: f64 },
    #[error(transparent)]
    List(#[from] ListError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListwisePrompt {
    pub query_text: String,
    /// `(index, text)` with indices 1..=m.
    pub passages: Vec<(usize, String)>,
    pub rendered: String,
}

pub fn render_listwise_prompt<S: AsRef<str>>(query_text: &str, passages: &[S]) -> Result<ListwisePrompt, RerankError> {
    let num = passages.len();
    if num == 0 {
        return Err(RerankError::EmptyPassages);
    }
    if num > MAX_PASSAGES {
        return Err(RerankError::TooManyPassages { count: num });
    }
    let mut out = String::new();
    out.push_str("<|system|>\n");
    out.push_str("You are RankGPT, an intelligent assistant that ranks passages based on their relevance to a query.\n");
    out.push_str("<|user|>\n");
    out.push_str(&format!(
        "I will provide you with {num} passages, each indicated by a number identifier [ ]. \
         Rank the passages based on their relevance to the query: {query_text}.\n\n"
    ));
    for (i, p) in passages.iter().enumerate() {
        out.push_str(&format!("[{}] {}\n", i + 1, p.as_ref()));
    }
    out.push_str(&format!("\nSearch Query: {query_text}.\n\n"));
    out.push_str(&format!(
        "Rank the {num} passages above based on their relevance to the search query. \
         The passages should be listed in descending order using identifiers. \
         The most relevant passages should be listed first. \
         The output format should be [ ] > [ ], e.g., [1] > [2]. \
         Only respond with the ranking results, do not say any word or explain.\n"
    ));
    out.push_str("<|assistant|>\n");
    Ok(ListwisePrompt {
        query_text: query_text.to_string(),
        passages: passages.iter().enumerate().map(|(i, p)| (i + 1, p.as_ref().to_string())).collect(),
        rendered: out,
    })
}

/// Every `[digits]` in `raw`, in order. Values too large for `usize` are
/// reported as `None`.
fn bracketed_ids(raw: &str) -> Vec<Option<usize>> {
    let bytes = raw.as_bytes();
    let mut ids = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'[' {
            let start = i + 1;
            let mut j = start;
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            if j > start && j < bytes.len() && bytes[j] == b']' {
                ids.push(raw[start..j].parse::<usize>().ok());
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    ids
}

/// Model output to a permutation of 1..=m: bracketed ids in order, out-of-range
/// ids dropped, duplicates dropped after their first occurrence, missing ids
/// appended in ascending order.
pub fn parse_listwise_ranking(raw: &str, m: usize) -> Result<Vec<usize>, RerankError> {
    if m == 0 {
        return Err(RerankError::EmptyPassages);
    }
    let mut seen = vec![false; m + 1];
    let mut perm = Vec::with_capacity(m);
    for id in bracketed_ids(raw).into_iter().flatten() {
        if (1..=m).contains(&id) && !seen[id] {
            seen[id] = true;
            perm.push(id);
        }
    }
    if perm.is_empty() {
        return Err(RerankError::Unparseable(raw.to_string()));
    }
    perm.extend((1..=m).filter(|i| !seen[*i]));
    Ok(perm)
}

/// Reorders the first `perm.len()` entries of `base` by `perm` (1-based);
/// the remaining entries keep their order after them.
///
/// With `score_from_rank` every entry is rescored `1 / rank`. Otherwise the
/// base scores are reassigned by position, so the identity permutation gives
/// back `base` unchanged; reordered documents that land on tied scores are
/// then ordered by doc id.
pub fn apply_rerank(base: &RankedList, perm: &[usize], score_from_rank: bool) -> Result<RankedList, RerankError> {
    let p = perm.len();
    let bad = |reason: String| RerankError::BadPermutation { len: p, reason };
    if p > base.len() {
        return Err(bad(format!("longer than the base list ({})", base.len())));
    }
    let mut seen = vec![false; p + 1];
    for &i in perm {
        if i == 0 || i > p {
            return Err(bad(format!("index {i} out of range")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(bad(format!("index {i} repeated")));
        }
    }
    let base_entries = base.entries();
    let order = perm.iter().map(|i| &base_entries[i - 1].0).chain(base_entries[p..].iter().map(|e| &e.0));
    let entries: Vec<(String, f64)> = order
        .enumerate()
        .map(|(pos, doc)| {
            let score = if score_from_rank { 1.0 / (pos + 1) as f64 } else { base_entries[pos].1 };
            (doc.clone(), score)
        })
        .collect();
    Ok(RankedList::new(base.query_key(), base.mode(), entries)?)
}

/// Point-wise probabilities of "true" to a canonical list over `candidates`.
pub fn pointwise_to_list(
    query_key: &str,
    mode: crate::model::Mode,
    scores: &HashMap<String, f64>,
    candidates: &[String],
) -> Result<RankedList, RerankError> {
    let entries = candidates
        .iter()
        .map(|doc| {
            let score = *scores.get(doc).ok_or_else(|| RerankError::MissingScore(doc.clone()))?;
            if !(0.0..=1.0).contains(&score) {
                return Err(RerankError::ScoreOutOfRange { doc_id: doc.clone(), score });
            }
            Ok((doc.clone(), score))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RankedList::new(query_key, mode, entries)?)
}
