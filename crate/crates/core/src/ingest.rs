//! Dataset and run-file parsing and serialization.
//!
//! Dataset directories hold line-delimited JSON files whose names start with
//! `documents`, `core_queries` or `instructed_queries` (for example
//! `documents.jsonl` or `documents_audience.jsonl`); all matching files are
//! read in file-name order.
//!
//! Run files use the six-column interchange format
//! `<query_key> Q0 <doc_id> <rank> <score> <tag>`. A system directory holds
//! one run file per mode, named by [`run_file_name`].

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::model::{
    canonical_order, validate_dataset, CoreQuery, Dataset, Document, DuplicateList,
    InstructedQuery, ListError, Mode, RankedList, RunSet,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{file}:{line}: {reason}")]
    MalformedLine { file: String, line: usize, reason: String },
    #[error("integrity violation: {0}")]
    IntegrityViolation(String),
    #[error("no {kind} file in {}", dir.display())]
    MissingInput { dir: PathBuf, kind: &'static str },
    #[error("query {query_key}: document {doc_id} listed more than once")]
    DuplicateDoc { query_key: String, doc_id: String },
    #[error("query {query_key}: ranks are not 1..m without gaps")]
    RankGap { query_key: String },
    #[error("query {query_key}: score at rank {rank} contradicts rank order")]
    ScoreOrder { query_key: String, rank: usize },
    #[error(transparent)]
    DuplicateList(#[from] DuplicateList),
}

impl IngestError {
    fn io(path: &Path, source: io::Error) -> Self {
        IngestError::Io { path: path.to_path_buf(), source }
    }

    /// True for failures of the environment rather than of the data.
    pub fn is_io(&self) -> bool {
        matches!(self, IngestError::Io { .. } | IngestError::MissingInput { .. })
    }
}

pub const DOCUMENTS_PREFIX: &str = "documents";
pub const CORE_QUERIES_PREFIX: &str = "core_queries";
pub const INSTRUCTED_QUERIES_PREFIX: &str = "instructed_queries";

/// Parses one JSON record per non-blank line.
pub fn parse_records<T: DeserializeOwned>(text: &str, source: &str) -> Result<Vec<T>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|e| IngestError::MalformedLine {
            file: source.to_string(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Assembles parsed records into a [`Dataset`], rejecting duplicate ids and
/// anything [`validate_dataset`] flags.
/// Keys records by id, rejecting duplicate ids but not checking references.
pub fn collect_dataset(
    documents: Vec<Document>,
    core_queries: Vec<CoreQuery>,
    instructed_queries: Vec<InstructedQuery>,
) -> Result<Dataset, IngestError> {
    let mut ds = Dataset::default();
    for doc in documents {
        if ds.documents.contains_key(&doc.doc_id) {
            return Err(IngestError::IntegrityViolation(format!("duplicate doc_id {}", doc.doc_id)));
        }
        ds.documents.insert(doc.doc_id.clone(), doc);
    }
    for core in core_queries {
        if ds.core_queries.contains_key(&core.core_id) {
            return Err(IngestError::IntegrityViolation(format!("duplicate core_id {}", core.core_id)));
        }
        ds.core_queries.insert(core.core_id.clone(), core);
    }
    for iq in instructed_queries {
        if ds.instructed_queries.contains_key(&iq.query_id) {
            return Err(IngestError::IntegrityViolation(format!("duplicate query_id {}", iq.query_id)));
        }
        ds.instructed_queries.insert(iq.query_id.clone(), iq);
    }
    Ok(ds)
}

pub fn assemble_dataset(
    documents: Vec<Document>,
    core_queries: Vec<CoreQuery>,
    instructed_queries: Vec<InstructedQuery>,
) -> Result<Dataset, IngestError> {
    let ds = collect_dataset(documents, core_queries, instructed_queries)?;
    let report = validate_dataset(&ds);
    if let Some(first) = report.violations.first() {
        let more = report.violations.len() - 1;
        let detail = if more > 0 { format!("{first} (and {more} more)") } else { first.to_string() };
        return Err(IngestError::IntegrityViolation(detail));
    }
    Ok(ds)
}

fn files_with_prefix(dir: &Path, prefix: &str) -> Result<Vec<PathBuf>, IngestError> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| IngestError::io(dir, e))? {
        let entry = entry.map_err(|e| IngestError::io(dir, e))?;
        let path = entry.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let is_jsonl = name.ends_with(".jsonl") || name.ends_with(".json");
        if is_jsonl && name.starts_with(prefix) && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn read_records<T: DeserializeOwned>(dir: &Path, prefix: &'static str) -> Result<Vec<T>, IngestError> {
    let files = files_with_prefix(dir, prefix)?;
    if files.is_empty() {
        return Err(IngestError::MissingInput { dir: dir.to_path_buf(), kind: prefix });
    }
    let mut out = Vec::new();
    for path in files {
        let text = fs::read_to_string(&path).map_err(|e| IngestError::io(&path, e))?;
        out.extend(parse_records(&text, &path.display().to_string())?);
    }
    Ok(out)
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset, IngestError> {
    let dir = dir.as_ref();
    let documents = read_records(dir, DOCUMENTS_PREFIX)?;
    let cores = read_records(dir, CORE_QUERIES_PREFIX)?;
    let instructed = read_records(dir, INSTRUCTED_QUERIES_PREFIX)?;
    assemble_dataset(documents, cores, instructed)
}

/// Like [`load_dataset`] but leaves reference checks to the caller.
pub fn load_dataset_unchecked(dir: impl AsRef<Path>) -> Result<Dataset, IngestError> {
    let dir = dir.as_ref();
    let documents = read_records(dir, DOCUMENTS_PREFIX)?;
    let cores = read_records(dir, CORE_QUERIES_PREFIX)?;
    let instructed = read_records(dir, INSTRUCTED_QUERIES_PREFIX)?;
    collect_dataset(documents, cores, instructed)
}

fn records_to_jsonl<'a, T: Serialize + 'a>(records: impl IntoIterator<Item = &'a T>) -> String {
    let mut out = String::new();
    for record in records {
        // Serializing plain structs of strings never fails.
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Writes `documents.jsonl`, `core_queries.jsonl` and `instructed_queries.jsonl`
/// into `dir`, records ordered by id.
pub fn write_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<(), IngestError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| IngestError::io(dir, e))?;
    let files = [
        (DOCUMENTS_PREFIX, records_to_jsonl(dataset.documents.values())),
        (CORE_QUERIES_PREFIX, records_to_jsonl(dataset.core_queries.values())),
        (INSTRUCTED_QUERIES_PREFIX, records_to_jsonl(dataset.instructed_queries.values())),
    ];
    for (prefix, body) in files {
        let path = dir.join(format!("{prefix}.jsonl"));
        fs::write(&path, body).map_err(|e| IngestError::io(&path, e))?;
    }
    Ok(())
}

/// One parsed line of a run file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunFileLine<'a> {
    pub query_key: &'a str,
    pub doc_id: &'a str,
    pub rank: usize,
    pub score: f64,
    pub tag: &'a str,
}

/// Parses one non-blank run-file line.
pub fn parse_run_line<'a>(line: &'a str, source: &str, line_no: usize) -> Result<RunFileLine<'a>, IngestError> {
    let malformed = |reason: String| IngestError::MalformedLine {
        file: source.to_string(),
        line: line_no,
        reason,
    };
    let mut cols = line.split_whitespace();
    let mut fields = [""; 6];
    let mut count = 0;
    for col in cols.by_ref().take(6) {
        fields[count] = col;
        count += 1;
    }
    let extra = cols.count();
    if count != 6 || extra > 0 {
        return Err(malformed(format!("expected 6 columns, found {}", count + extra)));
    }
    let [query_key, q0, doc_id, rank, score, tag] = fields;
    if q0 != "Q0" {
        return Err(malformed(format!("second column must be Q0, found {q0:?}")));
    }
    let rank: usize = rank
        .parse()
        .ok()
        .filter(|r| *r >= 1)
        .ok_or_else(|| malformed(format!("rank {rank:?} is not a positive integer")))?;
    let score: f64 = score
        .parse()
        .ok()
        .filter(|s: &f64| s.is_finite())
        .ok_or_else(|| malformed(format!("score {score:?} is not a finite number")))?;
    Ok(RunFileLine { query_key, doc_id, rank, score, tag })
}

/// Parses run-file text into canonical lists, ordered by query key.
///
/// With `score_from_rank`, the score column is replaced by `1 / rank` and
/// its values are not checked against the rank order.
pub fn parse_run(
    text: &str,
    source: &str,
    mode: Mode,
    score_from_rank: bool,
) -> Result<Vec<RankedList>, IngestError> {
    let mut groups: HashMap<&str, Vec<RunFileLine>> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed = parse_run_line(line, source, i + 1)?;
        groups.entry(parsed.query_key).or_default().push(parsed);
    }
    let mut groups: Vec<(&str, Vec<RunFileLine>)> = groups.into_iter().collect();
    groups.sort_unstable_by_key(|g| g.0);

    let mut lists = Vec::with_capacity(groups.len());
    for (query_key, mut lines) in groups {
        let query_key = query_key.to_string();
        lines.sort_by_key(|l| l.rank);
        if lines.iter().enumerate().any(|(i, l)| l.rank != i + 1) {
            return Err(IngestError::RankGap { query_key });
        }
        let entries: Vec<(String, f64)> = lines
            .into_iter()
            .map(|l| {
                let score = if score_from_rank { 1.0 / l.rank as f64 } else { l.score };
                (l.doc_id.to_string(), if score == 0.0 { 0.0 } else { score })
            })
            .collect();
        if !score_from_rank {
            if let Some(i) = entries
                .windows(2)
                .position(|w| canonical_order(&w[0], &w[1]) != std::cmp::Ordering::Less)
            {
                if entries[i].0 == entries[i + 1].0 {
                    return Err(IngestError::DuplicateDoc { query_key, doc_id: entries[i].0.clone() });
                }
                return Err(IngestError::ScoreOrder { query_key, rank: i + 2 });
            }
        }
        let list = RankedList::new(query_key, mode, entries).map_err(|e| match e {
            ListError::DuplicateDoc { query_key, doc_id } => IngestError::DuplicateDoc { query_key, doc_id },
            ListError::NonFiniteScore { query_key, .. } => IngestError::ScoreOrder { query_key, rank: 0 },
        })?;
        lists.push(list);
    }
    Ok(lists)
}

pub fn load_run(path: impl AsRef<Path>, mode: Mode, score_from_rank: bool) -> Result<Vec<RankedList>, IngestError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    parse_run(&text, &path.display().to_string(), mode, score_from_rank)
}

/// Formats a score with the shortest exact decimal representation, padded
/// with trailing zeros to at least six significant digits.
pub fn format_score(score: f64) -> String {
    let mut s = format!("{score}");
    if !s.contains('.') {
        s.push_str(".0");
    }
    let significant = s
        .trim_start_matches('-')
        .chars()
        .filter(char::is_ascii_digit)
        .skip_while(|c| *c == '0')
        .count();
    for _ in significant.max(1)..6 {
        s.push('0');
    }
    s
}

/// Renders lists in the six-column format, ranks 1..m per list.
pub fn format_run<'a>(lists: impl IntoIterator<Item = &'a RankedList>, tag: &str) -> String {
    let mut out = String::new();
    for list in lists {
        for (i, (doc_id, score)) in list.entries().iter().enumerate() {
            let _ = writeln!(out, "{} Q0 {} {} {} {}", list.query_key(), doc_id, i + 1, format_score(*score), tag);
        }
    }
    out
}

pub fn write_run<'a>(
    lists: impl IntoIterator<Item = &'a RankedList>,
    tag: &str,
    path: impl AsRef<Path>,
) -> Result<(), IngestError> {
    let path = path.as_ref();
    fs::write(path, format_run(lists, tag)).map_err(|e| IngestError::io(path, e))
}

/// File name of a mode's run file inside a system directory.
pub fn run_file_name(mode: Mode) -> String {
    format!("{}.run", mode.as_str())
}

/// Reads the three mode files of one system directory.
pub fn load_system(
    dir: impl AsRef<Path>,
    system_id: impl Into<String>,
    score_from_rank: bool,
) -> Result<RunSet, IngestError> {
    let dir = dir.as_ref();
    let mut run = RunSet::new(system_id);
    for mode in Mode::ALL {
        run.extend(load_run(dir.join(run_file_name(mode)), mode, score_from_rank)?)?;
    }
    Ok(run)
}

/// Writes the three mode files of `run` into `dir`, tagged with the system id.
pub fn write_system(run: &RunSet, dir: impl AsRef<Path>) -> Result<(), IngestError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| IngestError::io(dir, e))?;
    for mode in Mode::ALL {
        write_run(run.lists_for_mode(mode), &run.system_id, dir.join(run_file_name(mode)))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::desk_dataset;
    use proptest::prelude::*;

    #[test]
    fn single_line_run() {
        let lists = parse_run("q1 Q0 d3 1 12.5 bm25\n", "t", Mode::Original, false).unwrap();
        assert_eq!(lists.len(), 1);
        assert_eq!(lists[0].query_key(), "q1");
        assert_eq!(lists[0].entries(), &[("d3".to_string(), 12.5)]);
    }

    #[test]
    fn score_from_rank_uses_reciprocal_rank() {
        let text = "q Q0 d9 1 0 sys\nq Q0 d4 2 0 sys\n";
        let lists = parse_run(text, "t", Mode::Instructed, true).unwrap();
        assert_eq!(lists[0].entries(), &[("d9".to_string(), 1.0), ("d4".to_string(), 0.5)]);
        // without the flag, equal scores must follow doc-id order, which d9 > d4 violates
        assert!(matches!(
            parse_run(text, "t", Mode::Instructed, false),
            Err(IngestError::ScoreOrder { rank: 2, .. })
        ));
    }

    #[test]
    fn rank_gap_and_duplicates() {
        let gap = parse_run("q Q0 a 1 2.0 s\nq Q0 b 3 1.0 s\n", "t", Mode::Original, false);
        assert!(matches!(gap, Err(IngestError::RankGap { ref query_key }) if query_key == "q"));
        let repeated_rank = parse_run("q Q0 a 1 2.0 s\nq Q0 b 1 1.0 s\n", "t", Mode::Original, false);
        assert!(matches!(repeated_rank, Err(IngestError::RankGap { .. })));
        let dup = parse_run("q Q0 a 1 2.0 s\nq Q0 a 2 1.0 s\n", "t", Mode::Original, false);
        assert!(matches!(dup, Err(IngestError::DuplicateDoc { ref doc_id, .. }) if doc_id == "a"));
        let dup_rank_only = parse_run("q Q0 a 1 0 s\nq Q0 a 2 0 s\n", "t", Mode::Original, true);
        assert!(matches!(dup_rank_only, Err(IngestError::DuplicateDoc { .. })));
    }

    #[test]
    fn malformed_lines_name_the_line() {
        let cases = [
            "q Q0 a 1 2.0\n",
            "q Q1 a 1 2.0 s\n",
            "q Q0 a 0 2.0 s\n",
            "q Q0 a x 2.0 s\n",
            "q Q0 a 1 NaN s\n",
            "q Q0 a 1 inf s\n",
        ];
        for text in cases {
            let input = format!("q Q0 z 2 0.1 s\n\n{text}");
            match parse_run(&input, "f.run", Mode::Original, false) {
                Err(IngestError::MalformedLine { file, line, .. }) => {
                    assert_eq!(file, "f.run");
                    assert_eq!(line, 3, "{text}");
                }
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn lines_may_arrive_out_of_rank_order() {
        let lists = parse_run("q Q0 b 2 1 s\nq Q0 a 1 2 s\n", "t", Mode::Reversed, false).unwrap();
        assert_eq!(lists[0].rank_of("a"), Some(1));
        assert_eq!(lists[0].mode(), Mode::Reversed);
    }

    #[test]
    fn score_formatting() {
        assert_eq!(format_score(12.5), "12.5000");
        assert_eq!(format_score(0.5), "0.500000");
        assert_eq!(format_score(1.0), "1.00000");
        assert_eq!(format_score(0.0), "0.000000");
        assert_eq!(format_score(-0.2), "-0.200000");
        assert_eq!(format_score(1.0 / 3.0), "0.3333333333333333");
        assert_eq!(format_score(123456789.0), "123456789.0");
        assert_eq!(format_score(1e-7), "0.000000100000");
    }

    #[test]
    fn empty_fragment_writes_empty_file() {
        assert_eq!(format_run(std::iter::empty(), "x"), "");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.run");
        write_run(std::iter::empty(), "x", &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "");
        assert!(load_run(&path, Mode::Original, false).unwrap().is_empty());
    }

    #[test]
    fn three_entries_three_lines() {
        let list = RankedList::new(
            "q7",
            Mode::Original,
            vec![("x".into(), 0.1), ("y".into(), 0.3), ("z".into(), 0.2)],
        )
        .unwrap();
        let text = format_run([&list], "sys");
        let ranks: Vec<&str> = text.lines().map(|l| l.split(' ').nth(3).unwrap()).collect();
        assert_eq!(ranks, ["1", "2", "3"]);
        assert!(text.starts_with("q7 Q0 y 1 0.300000 sys\n"));
    }

    #[test]
    fn dataset_round_trip_through_directory() {
        let ds = desk_dataset();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(loaded, ds);
        assert_eq!(loaded.core_queries.len(), 2);
    }

    #[test]
    fn per_dimension_files_are_merged() {
        let ds = desk_dataset();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let docs = fs::read_to_string(dir.path().join("documents.jsonl")).unwrap();
        let lines: Vec<&str> = docs.lines().collect();
        let (first, second) = lines.split_at(lines.len() / 2);
        fs::remove_file(dir.path().join("documents.jsonl")).unwrap();
        fs::write(dir.path().join("documents_a.jsonl"), first.join("\n")).unwrap();
        fs::write(dir.path().join("documents_b.jsonl"), second.join("\n")).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), ds);
    }

    #[test]
    fn duplicate_doc_id_is_an_integrity_violation() {
        let ds = desk_dataset();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let path = dir.path().join("documents.jsonl");
        let mut docs = fs::read_to_string(&path).unwrap();
        let first = docs.lines().next().unwrap().to_string();
        docs.push_str(&first);
        docs.push('\n');
        fs::write(&path, docs).unwrap();
        match load_dataset(dir.path()) {
            Err(IngestError::IntegrityViolation(detail)) => assert!(detail.contains("c1-expert"), "{detail}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn broken_reference_and_bad_json() {
        let ds = desk_dataset();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let path = dir.path().join("instructed_queries.jsonl");
        let text = fs::read_to_string(&path).unwrap().replacen("\"gold_doc_id\":\"c1-expert\"", "\"gold_doc_id\":\"c1-neg1\"", 1);
        fs::write(&path, &text).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(IngestError::IntegrityViolation(_))));

        fs::write(&path, "{\"query_id\": 3}\n").unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(IngestError::MalformedLine { line: 1, .. })
        ));
    }

    #[test]
    fn missing_inputs_are_io_class() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.is_io(), "{err}");
        let err = load_dataset(dir.path().join("nope")).unwrap_err();
        assert!(err.is_io(), "{err}");
    }

    fn arb_fragment() -> impl Strategy<Value = Vec<RankedList>> {
        let entries = proptest::collection::btree_map(
            "[a-z][a-z0-9_-]{0,6}",
            prop_oneof![
                (-1000i64..1000).prop_map(|v| v as f64 / 8.0),
                -1e6f64..1e6f64,
                Just(0.0),
            ],
            0..12,
        );
        proptest::collection::btree_map("q[0-9]{1,3}", entries, 0..6).prop_map(|m| {
            m.into_iter()
                .filter(|(_, e)| !e.is_empty())
                .map(|(k, e)| RankedList::new(k, Mode::Instructed, e.into_iter().collect()).unwrap())
                .collect()
        })
    }

    proptest! {
        #[test]
        fn write_then_load_is_identity(fragment in arb_fragment()) {
            let text = format_run(&fragment, "sys");
            let back = parse_run(&text, "mem", Mode::Instructed, false).unwrap();
            prop_assert_eq!(back, fragment);
        }

        #[test]
        fn run_parser_never_panics(text in "[ a-z0-9Q.\\-\n]{0,200}") {
            let _ = parse_run(&text, "fuzz", Mode::Original, false);
            let _ = parse_run(&text, "fuzz", Mode::Original, true);
        }
    }
}
