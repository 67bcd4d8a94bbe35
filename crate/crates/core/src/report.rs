//! Leaderboard tables: csv, markdown and JSON lines.
//!
//! Values are multiplied by the report scale (100 by default). Display
//! formats show one decimal place, rounded half away from zero on the
//! shortest decimal representation; structured output keeps full precision.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{DimensionSummary, SystemEvaluation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportError {
    #[error("ideal value {0} is not positive")]
    NonPositiveIdeal(f64),
    #[error("no rows to render")]
    EmptyRows,
    #[error("unexpected csv header: {0}")]
    BadHeader(String),
    #[error("line {line}: bad value {value:?} in column {column}")]
    BadField { line: u64, column: &'static str, value: String },
    #[error("csv: {0}")]
    Csv(String),
    #[error("structured output: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Format {
    Markdown,
    Csv,
    Structured,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(Format::Markdown),
            "csv" => Ok(Format::Csv),
            "structured" | "jsonl" => Ok(Format::Structured),
            _ => Err(format!("unknown format {s:?}")),
        }
    }
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Markdown => "md",
            Format::Csv => "csv",
            Format::Structured => "jsonl",
        }
    }
}

/// One leaderboard row. `None` marks a value that is undefined for the
/// scope (no non-degenerate reversed query, or no positive ideal).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub system_id: String,
    pub scope: String,
    pub ndcg_ori: f64,
    pub ndcg_ins: f64,
    pub ndcg_rev: Option<f64>,
    pub mrr1_ori: f64,
    pub mrr1_ins: f64,
    pub mrr1_rev: Option<f64>,
    pub robustness_ori: f64,
    pub robustness_ins: f64,
    pub robustness_rev: Option<f64>,
    pub p_mrr: f64,
    pub wise_act: f64,
    pub wise_ideal: f64,
    pub per: Option<f64>,
    pub sicr: f64,
}

pub const COLUMNS: [&str; 16] = [
    "system_id",
    "scope",
    "ndcg_ori",
    "ndcg_ins",
    "ndcg_rev",
    "mrr1_ori",
    "mrr1_ins",
    "mrr1_rev",
    "robustness_ori",
    "robustness_ins",
    "robustness_rev",
    "p_mrr",
    "wise_act",
    "wise_ideal",
    "per",
    "sicr",
];

const UNDEFINED: &str = "n/a";

/// Percentage gap of `act` below `ideal`.
pub fn per_gap(act: f64, ideal: f64) -> Result<f64, ReportError> {
    if ideal > 0.0 {
        Ok(100.0 * (ideal - act) / ideal)
    } else {
        Err(ReportError::NonPositiveIdeal(ideal))
    }
}

impl ReportRow {
    pub fn from_summary(system_id: &str, s: &DimensionSummary, scale: f64) -> ReportRow {
        let x = |v: f64| v * scale;
        let wise_act = x(s.wise_act);
        let wise_ideal = x(s.wise_ideal);
        ReportRow {
            system_id: system_id.to_string(),
            scope: s.scope.to_string(),
            ndcg_ori: x(s.ndcg.ori),
            ndcg_ins: x(s.ndcg.ins),
            ndcg_rev: s.ndcg.rev.map(x),
            mrr1_ori: x(s.mrr1.ori),
            mrr1_ins: x(s.mrr1.ins),
            mrr1_rev: s.mrr1.rev.map(x),
            robustness_ori: x(s.robustness.ori),
            robustness_ins: x(s.robustness.ins),
            robustness_rev: s.robustness.rev.map(x),
            p_mrr: x(s.p_mrr),
            wise_act,
            wise_ideal,
            per: per_gap(wise_act, wise_ideal).ok(),
            sicr: x(s.sicr),
        }
    }

    /// Column values in [`COLUMNS`] order after the two text columns.
    pub fn values(&self) -> [Option<f64>; 14] {
        [
            Some(self.ndcg_ori),
            Some(self.ndcg_ins),
            self.ndcg_rev,
            Some(self.mrr1_ori),
            Some(self.mrr1_ins),
            self.mrr1_rev,
            Some(self.robustness_ori),
            Some(self.robustness_ins),
            self.robustness_rev,
            Some(self.p_mrr),
            Some(self.wise_act),
            Some(self.wise_ideal),
            self.per,
            Some(self.sicr),
        ]
    }

    fn from_values(system_id: String, scope: String, v: [Option<f64>; 14]) -> Option<ReportRow> {
        Some(ReportRow {
            system_id,
            scope,
            ndcg_ori: v[0]?,
            ndcg_ins: v[1]?,
            ndcg_rev: v[2],
            mrr1_ori: v[3]?,
            mrr1_ins: v[4]?,
            mrr1_rev: v[5],
            robustness_ori: v[6]?,
            robustness_ins: v[7]?,
            robustness_rev: v[8],
            p_mrr: v[9]?,
            wise_act: v[10]?,
            wise_ideal: v[11]?,
            per: v[12],
            sicr: v[13]?,
        })
    }
}

/// Dimension rows followed by the overall row.
pub fn system_rows(eval: &SystemEvaluation, scale: f64) -> Vec<ReportRow> {
    eval.rows().map(|s| ReportRow::from_summary(&eval.system_id, s, scale)).collect()
}

/// Overall row of every system, in the given order.
pub fn leaderboard_rows(evals: &[SystemEvaluation], scale: f64) -> Vec<ReportRow> {
    evals.iter().map(|e| ReportRow::from_summary(&e.system_id, &e.overall, scale)).collect()
}

/// One decimal place, half away from zero, decided on the shortest decimal
/// string of `v` so that e.g. 0.15 gives 0.2.
pub fn round1(v: f64) -> String {
    if !v.is_finite() {
        return UNDEFINED.to_string();
    }
    let repr = format!("{}", v.abs());
    let (int_part, frac) = repr.split_once('.').unwrap_or((repr.as_str(), ""));
    let mut digits: Vec<u8> = int_part.bytes().map(|b| b - b'0').collect();
    let frac = frac.as_bytes();
    digits.push(frac.first().map_or(0, |b| b - b'0'));
    if frac.get(1).is_some_and(|b| *b >= b'5') {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let (whole, tenth) = digits.split_at(digits.len() - 1);
    let whole: String = whole.iter().map(|d| (d + b'0') as char).collect();
    let is_zero = whole.bytes().all(|b| b == b'0') && tenth[0] == 0;
    let sign = if v < 0.0 && !is_zero { "-" } else { "" };
    format!("{sign}{whole}.{}", tenth[0])
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), round1)
}

pub fn render(rows: &[ReportRow], format: Format) -> Result<String, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::EmptyRows);
    }
    match format {
        Format::Csv => render_csv(rows),
        Format::Markdown => Ok(render_markdown(rows)),
        Format::Structured => {
            let mut out = String::new();
            for row in rows {
                out.push_str(&serde_json::to_string(row).map_err(|e| ReportError::Json(e.to_string()))?);
                out.push('\n');
            }
            Ok(out)
        }
    }
}

fn render_csv(rows: &[ReportRow]) -> Result<String, ReportError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let err = |e: csv::Error| ReportError::Csv(e.to_string());
    w.write_record(COLUMNS).map_err(err)?;
    for row in rows {
        let mut rec = vec![row.system_id.clone(), row.scope.clone()];
        rec.extend(row.values().into_iter().map(cell));
        w.write_record(&rec).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| ReportError::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| ReportError::Csv(e.to_string()))
}

fn render_markdown(rows: &[ReportRow]) -> String {
    let mut out = format!("| {} |\n", COLUMNS.join(" | "));
    out.push('|');
    for (i, _) in COLUMNS.iter().enumerate() {
        out.push_str(if i < 2 { "---|" } else { "---:|" });
    }
    out.push('\n');
    for row in rows {
        let escape = |s: &str| s.replace('|', "\\|");
        let mut cells = vec![escape(&row.system_id), escape(&row.scope)];
        cells.extend(row.values().into_iter().map(cell));
        out.push_str(&format!("| {} |\n", cells.join(" | ")));
    }
    out
}

/// Reads csv produced by [`render`]. Values carry the displayed precision.
pub fn parse_csv(text: &str) -> Result<Vec<ReportRow>, ReportError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| ReportError::Csv(e.to_string()))?.clone();
    if headers.iter().ne(COLUMNS) {
        return Err(ReportError::BadHeader(headers.iter().collect::<Vec<_>>().join(",")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| ReportError::Csv(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut values = [None; 14];
        for (i, slot) in values.iter_mut().enumerate() {
            let column = COLUMNS[i + 2];
            let raw = &rec[i + 2];
            let bad = || ReportError::BadField { line, column, value: raw.to_string() };
            *slot = if raw == UNDEFINED {
                None
            } else {
                let v: f64 = raw.parse().map_err(|_| bad())?;
                if !v.is_finite() {
                    return Err(bad());
                }
                Some(v)
            };
        }
        let row = ReportRow::from_values(rec[0].to_string(), rec[1].to_string(), values).ok_or_else(|| {
            ReportError::BadField { line, column: "required", value: UNDEFINED.to_string() }
        })?;
        rows.push(row);
    }
    Ok(rows)
}
