//! Immutable domain types shared by every other module.
//!
//! A [`Dataset`] holds documents, core queries and their instructed
//! variants. A [`RunSet`] holds one system's ranked lists, keyed by query and
//! [`Mode`]. Ranked lists are always kept in canonical form: non-increasing
//! score, ties broken by ascending `doc_id`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Document-level attribute an instruction can constrain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dimension {
    Audience,
    Keyword,
    Format,
    Language,
    Length,
    Source,
}

impl Dimension {
    pub const ALL: [Dimension; 6] = [
        Dimension::Audience,
        Dimension::Keyword,
        Dimension::Format,
        Dimension::Language,
        Dimension::Length,
        Dimension::Source,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Audience => "Audience",
            Dimension::Keyword => "Keyword",
            Dimension::Format => "Format",
            Dimension::Language => "Language",
            Dimension::Length => "Length",
            Dimension::Source => "Source",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown dimension {0:?}")]
pub struct UnknownDimension(pub String);

impl FromStr for Dimension {
    type Err = UnknownDimension;

    /// Case-insensitive.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownDimension(s.to_string()))
    }
}

impl Serialize for Dimension {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Dimension {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// The three retrieval modes every instructed query is evaluated under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    /// Core query text only.
    Original,
    /// Core query plus the instruction.
    Instructed,
    /// Core query plus the negated instruction.
    Reversed,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Original, Mode::Instructed, Mode::Reversed];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Original => "original",
            Mode::Instructed => "instructed",
            Mode::Reversed => "reversed",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    pub dimension: Dimension,
    pub condition: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Positive {
    pub doc_id: String,
    pub condition: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CoreQuery {
    pub core_id: String,
    pub text: String,
    pub dimension: Dimension,
    pub positives: Vec<Positive>,
}

impl CoreQuery {
    pub fn positive_ids(&self) -> impl Iterator<Item = &str> {
        self.positives.iter().map(|p| p.doc_id.as_str())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InstructedQuery {
    pub query_id: String,
    pub core_id: String,
    pub dimension: Dimension,
    pub condition: String,
    pub instructed_text: String,
    pub reversed_text: String,
    pub gold_doc_id: String,
}

/// Documents, core queries and instructed queries keyed by their ids.
///
/// Maps are ordered so that every traversal (evaluation, serialization) is
/// deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub documents: BTreeMap<String, Document>,
    pub core_queries: BTreeMap<String, CoreQuery>,
    pub instructed_queries: BTreeMap<String, InstructedQuery>,
}

/// A single integrity problem found by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyDocumentText { doc_id: String },
    NoPositives { core_id: String },
    UnknownPositiveDoc { core_id: String, doc_id: String },
    DuplicatePositiveCondition { core_id: String, condition: String },
    UnknownCoreQuery { query_id: String, core_id: String },
    DimensionMismatch { query_id: String, core_id: String },
    GoldNotPositive { query_id: String, gold_doc_id: String },
    UnknownGoldDoc { query_id: String, gold_doc_id: String },
    DuplicateCondition { core_id: String, condition: String },
    EmptyQueryText { id: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyDocumentText { doc_id } => write!(f, "document {doc_id}: empty text"),
            Violation::NoPositives { core_id } => write!(f, "core query {core_id}: no positives"),
            Violation::UnknownPositiveDoc { core_id, doc_id } => {
                write!(f, "core query {core_id}: positive {doc_id} is not a known document")
            }
            Violation::DuplicatePositiveCondition { core_id, condition } => {
                write!(f, "core query {core_id}: condition {condition:?} repeated among positives")
            }
            Violation::UnknownCoreQuery { query_id, core_id } => {
                write!(f, "instructed query {query_id}: core query {core_id} does not exist")
            }
            Violation::DimensionMismatch { query_id, core_id } => {
                write!(f, "instructed query {query_id}: dimension differs from core query {core_id}")
            }
            Violation::GoldNotPositive { query_id, gold_doc_id } => write!(
                f,
                "instructed query {query_id}: gold {gold_doc_id} is not a positive of its core query"
            ),
            Violation::UnknownGoldDoc { query_id, gold_doc_id } => {
                write!(f, "instructed query {query_id}: gold {gold_doc_id} is not a known document")
            }
            Violation::DuplicateCondition { core_id, condition } => write!(
                f,
                "core query {core_id}: more than one instructed query with condition {condition:?}"
            ),
            Violation::EmptyQueryText { id } => write!(f, "query {id}: empty text"),
        }
    }
}

/// Per-dimension counts in the shape of the dataset statistics table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DimensionCounts {
    pub core: usize,
    pub instructed: usize,
    pub reversed: usize,
    pub docs: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub counts: BTreeMap<Dimension, DimensionCounts>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn totals(&self) -> DimensionCounts {
        self.counts.values().fold(DimensionCounts::default(), |acc, c| DimensionCounts {
            core: acc.core + c.core,
            instructed: acc.instructed + c.instructed,
            reversed: acc.reversed + c.reversed,
            docs: acc.docs + c.docs,
        })
    }
}

/// Checks referential integrity and tallies the per-dimension count matrix.
///
/// Violations are returned as data; the list is empty iff the dataset is
/// well-formed.
pub fn validate_dataset(dataset: &Dataset) -> ValidationReport {
    let mut violations = Vec::new();
    let mut counts: BTreeMap<Dimension, DimensionCounts> = BTreeMap::new();

    for doc in dataset.documents.values() {
        counts.entry(doc.dimension).or_default().docs += 1;
        if doc.text.trim().is_empty() {
            violations.push(Violation::EmptyDocumentText { doc_id: doc.doc_id.clone() });
        }
    }

    for core in dataset.core_queries.values() {
        counts.entry(core.dimension).or_default().core += 1;
        if core.text.trim().is_empty() {
            violations.push(Violation::EmptyQueryText { id: core.core_id.clone() });
        }
        if core.positives.is_empty() {
            violations.push(Violation::NoPositives { core_id: core.core_id.clone() });
        }
        let mut seen_conditions = HashSet::new();
        for positive in &core.positives {
            if !dataset.documents.contains_key(&positive.doc_id) {
                violations.push(Violation::UnknownPositiveDoc {
                    core_id: core.core_id.clone(),
                    doc_id: positive.doc_id.clone(),
                });
            }
            // Keyword conditions are per-document keywords and may collide.
            if core.dimension != Dimension::Keyword && !seen_conditions.insert(positive.condition.as_str()) {
                violations.push(Violation::DuplicatePositiveCondition {
                    core_id: core.core_id.clone(),
                    condition: positive.condition.clone(),
                });
            }
        }
    }

    let mut seen_pairs: BTreeSet<(&str, &str)> = BTreeSet::new();
    for iq in dataset.instructed_queries.values() {
        let entry = counts.entry(iq.dimension).or_default();
        entry.instructed += 1;
        if !iq.reversed_text.trim().is_empty() {
            entry.reversed += 1;
        }
        if iq.instructed_text.trim().is_empty() || iq.reversed_text.trim().is_empty() {
            violations.push(Violation::EmptyQueryText { id: iq.query_id.clone() });
        }
        if !dataset.documents.contains_key(&iq.gold_doc_id) {
            violations.push(Violation::UnknownGoldDoc {
                query_id: iq.query_id.clone(),
                gold_doc_id: iq.gold_doc_id.clone(),
            });
        }
        match dataset.core_queries.get(&iq.core_id) {
            None => violations.push(Violation::UnknownCoreQuery {
                query_id: iq.query_id.clone(),
                core_id: iq.core_id.clone(),
            }),
            Some(core) => {
                if core.dimension != iq.dimension {
                    violations.push(Violation::DimensionMismatch {
                        query_id: iq.query_id.clone(),
                        core_id: iq.core_id.clone(),
                    });
                }
                if !core.positive_ids().any(|id| id == iq.gold_doc_id) {
                    violations.push(Violation::GoldNotPositive {
                        query_id: iq.query_id.clone(),
                        gold_doc_id: iq.gold_doc_id.clone(),
                    });
                }
            }
        }
        if !seen_pairs.insert((iq.core_id.as_str(), iq.condition.as_str())) {
            violations.push(Violation::DuplicateCondition {
                core_id: iq.core_id.clone(),
                condition: iq.condition.clone(),
            });
        }
    }

    ValidationReport { violations, counts }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ListError {
    #[error("list {query_key}: score for {doc_id} is not finite")]
    NonFiniteScore { query_key: String, doc_id: String },
    #[error("list {query_key}: document {doc_id} appears more than once")]
    DuplicateDoc { query_key: String, doc_id: String },
}

/// Total order used for canonical lists: higher score first, then doc id.
pub fn canonical_order(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

/// One ranked list of `(doc_id, score)` entries for one query in one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    query_key: String,
    mode: Mode,
    entries: Vec<(String, f64)>,
}

impl RankedList {
    /// Builds a canonical list. Entry order in the input is irrelevant.
    pub fn new(
        query_key: impl Into<String>,
        mode: Mode,
        mut entries: Vec<(String, f64)>,
    ) -> Result<Self, ListError> {
        let query_key = query_key.into();
        if let Some((doc_id, _)) = entries.iter().find(|(_, s)| !s.is_finite()) {
            return Err(ListError::NonFiniteScore { query_key, doc_id: doc_id.clone() });
        }
        let mut seen = HashSet::with_capacity(entries.len());
        if let Some((doc_id, _)) = entries.iter().find(|(d, _)| !seen.insert(d.as_str())) {
            return Err(ListError::DuplicateDoc { query_key, doc_id: doc_id.clone() });
        }
        // -0.0 and 0.0 must compare equal under the tiebreak.
        for entry in &mut entries {
            if entry.1 == 0.0 {
                entry.1 = 0.0;
            }
        }
        entries.sort_by(canonical_order);
        Ok(RankedList { query_key, mode, entries })
    }

    pub fn query_key(&self) -> &str {
        &self.query_key
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(d, _)| d.as_str())
    }

    /// Re-sorts into canonical form. Lists built through [`RankedList::new`]
    /// are already canonical, so this is the identity on them.
    pub fn canonicalize(mut self) -> Self {
        self.entries.sort_by(canonical_order);
        self
    }

    /// Multiplies every score by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, ListError> {
        let entries = self.entries.iter().map(|(d, s)| (d.clone(), s * factor)).collect();
        RankedList::new(self.query_key.clone(), self.mode, entries)
    }

    /// 1-based rank of `doc_id`, or `None` when the document is absent.
    pub fn rank_of(&self, doc_id: &str) -> Option<usize> {
        self.entries.iter().position(|(d, _)| d == doc_id).map(|i| i + 1)
    }

    pub fn score_of(&self, doc_id: &str) -> Option<f64> {
        self.entries.iter().find(|(d, _)| d == doc_id).map(|(_, s)| *s)
    }
}

/// All ranked lists produced by one system.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSet {
    pub system_id: String,
    lists: BTreeMap<Mode, BTreeMap<String, RankedList>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("run {system_id}: more than one {mode} list for {query_key}")]
pub struct DuplicateList {
    pub system_id: String,
    pub query_key: String,
    pub mode: Mode,
}

impl RunSet {
    pub fn new(system_id: impl Into<String>) -> Self {
        RunSet { system_id: system_id.into(), lists: BTreeMap::new() }
    }

    pub fn insert(&mut self, list: RankedList) -> Result<(), DuplicateList> {
        let by_key = self.lists.entry(list.mode).or_default();
        if by_key.contains_key(&list.query_key) {
            return Err(DuplicateList {
                system_id: self.system_id.clone(),
                query_key: list.query_key,
                mode: list.mode,
            });
        }
        by_key.insert(list.query_key.clone(), list);
        Ok(())
    }

    pub fn extend(&mut self, lists: impl IntoIterator<Item = RankedList>) -> Result<(), DuplicateList> {
        lists.into_iter().try_for_each(|l| self.insert(l))
    }

    pub fn get(&self, query_key: &str, mode: Mode) -> Option<&RankedList> {
        self.lists.get(&mode)?.get(query_key)
    }

    /// Every list, ordered by mode and then query key.
    pub fn lists(&self) -> impl Iterator<Item = &RankedList> {
        self.lists.values().flat_map(|m| m.values())
    }

    pub fn lists_for_mode(&self, mode: Mode) -> impl Iterator<Item = &RankedList> {
        self.lists.get(&mode).into_iter().flat_map(|m| m.values())
    }

    pub fn len(&self) -> usize {
        self.lists.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Copy of this run with every score multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, ListError> {
        let mut out = RunSet::new(self.system_id.clone());
        for list in self.lists() {
            let scaled = list.scaled(factor)?;
            out.lists.entry(scaled.mode).or_default().insert(scaled.query_key.clone(), scaled);
        }
        Ok(out)
    }
}
