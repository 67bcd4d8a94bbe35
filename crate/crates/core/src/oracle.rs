//! Reference implementation of every metric, written independently of
//! [`crate::metrics`] and [`crate::harness`] so the two can be checked
//! against each other. Only the data and result types are shared.
//!
//! Clarity over speed: lists are scanned linearly, sums run in natural order.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::harness::{DimensionSummary, EvalRecord, ModeTriple, Scope, SystemEvaluation};
use crate::metrics::{MetricConfig, PMrrSign};
use crate::model::{Dataset, Dimension, Mode, RankedList, RunSet};

pub const MAX_ORACLE_QUERIES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("{count} instructed queries exceeds the oracle limit of {MAX_ORACLE_QUERIES}")]
    TooLarge { count: usize },
    #[error("run has no {mode} list for {key}")]
    MissingList { key: String, mode: Mode },
    #[error("instructed query {0} references an unknown core query")]
    UnknownCore(String),
    #[error("no instructed queries")]
    Empty,
}

fn find<'a>(run: &'a RunSet, key: &str, mode: Mode) -> Result<&'a RankedList, OracleError> {
    run.get(key, mode).ok_or_else(|| OracleError::MissingList { key: key.to_string(), mode })
}

/// 1-based position of `doc`, or one past the end when absent, plus its score.
fn locate(list: &RankedList, doc: &str) -> (usize, Option<f64>) {
    for (i, (d, s)) in list.entries().iter().enumerate() {
        if d == doc {
            return (i + 1, Some(*s));
        }
    }
    (list.entries().len() + 1, None)
}

fn ndcg(list: &RankedList, relevant: &[&str], k: usize) -> f64 {
    let mut dcg = 0.0;
    for (i, (d, _)) in list.entries().iter().enumerate() {
        if i >= k {
            break;
        }
        if relevant.contains(&d.as_str()) {
            dcg += 1.0 / ((i + 2) as f64).log2();
        }
    }
    let mut idcg = 0.0;
    let mut i = 0;
    while i < relevant.len() && i < k {
        idcg += 1.0 / ((i + 2) as f64).log2();
        i += 1;
    }
    dcg / idcg
}

fn mrr1(list: &RankedList, relevant: &[&str]) -> f64 {
    match list.entries().first() {
        Some((d, _)) if relevant.contains(&d.as_str()) => 1.0,
        _ => 0.0,
    }
}

fn p_mrr(r_og: usize, r_new: usize, sign: PMrrSign) -> f64 {
    let (og, new) = (r_og as f64, r_new as f64);
    // MRR_og / MRR_new = r_new / r_og
    let v = if og > new { new / og - 1.0 } else { 1.0 - og / new };
    match sign {
        PMrrSign::AsPrinted => v,
        PMrrSign::Flipped => -v,
    }
}

/// WISE reward of one query; `n` positives, horizon `k`.
pub fn reward(r_ori: usize, r_ins: usize, n: usize, k: usize) -> f64 {
    if r_ori <= n && r_ins == 1 {
        return 1.0;
    }
    if r_ori > k {
        return 0.01;
    }
    let (o, i, kk) = (r_ori as f64, r_ins as f64, k as f64);
    (1.0 - (o - i) / kk) / i.sqrt()
}

/// Per-query WISE from resolved ranks.
pub fn wise_of(r_ori: usize, r_ins: usize, r_rev: usize, n: usize, k: usize) -> f64 {
    let (o, i, r) = (r_ori as f64, r_ins as f64, r_rev as f64);
    let improved = r_ins <= r_ori;
    let degraded = r_rev > r_ori;
    if improved && degraded {
        reward(r_ori, r_ins, n, k)
    } else if r_rev < r_ori && r_ori < r_ins {
        -1.0
    } else if r_ori <= r_ins {
        (o - i) / i
    } else {
        (r - o) / o
    }
}

pub fn ideal_of(r_ori: usize, n: usize, k: usize) -> f64 {
    let mut best = reward(r_ori, 1, n, k);
    for r in 2..=r_ori {
        let v = reward(r_ori, r, n, k);
        if v > best {
            best = v;
        }
    }
    best
}

fn avg(values: &[f64]) -> f64 {
    let mut total = 0.0;
    for v in values {
        total += v;
    }
    total / values.len() as f64
}

fn avg_some(values: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        None
    } else {
        Some(avg(&present))
    }
}

fn summarize(scope: Scope, recs: &[&EvalRecord]) -> DimensionSummary {
    let mut cores: Vec<&str> = recs.iter().map(|r| r.core_id.as_str()).collect();
    cores.sort();
    cores.dedup();
    let core_first = |c: &str| *recs.iter().find(|r| r.core_id == c).unwrap();
    let members = |c: &'_ str| recs.iter().filter(|r| r.core_id == c).copied().collect::<Vec<&EvalRecord>>();

    let ndcg_ori: Vec<f64> = cores.iter().map(|c| core_first(c).ndcg_ori).collect();
    let mrr_ori: Vec<f64> = cores.iter().map(|c| core_first(c).mrr1_ori).collect();
    let min_of = |vals: Vec<f64>| vals.into_iter().reduce(f64::min);
    let rob_ins: Vec<f64> = cores.iter().filter_map(|c| min_of(members(c).iter().map(|r| r.ndcg_ins).collect())).collect();
    let rob_rev: Vec<f64> = cores.iter().filter_map(|c| min_of(members(c).iter().filter_map(|r| r.ndcg_rev).collect())).collect();

    let act = avg(&recs.iter().map(|r| r.wise_f).collect::<Vec<_>>());
    let ideal = avg(&recs.iter().map(|r| r.wise_ideal).collect::<Vec<_>>());
    let hits = recs.iter().filter(|r| r.sicr_i).count();
    DimensionSummary {
        scope,
        ndcg: ModeTriple {
            ori: avg(&ndcg_ori),
            ins: avg(&recs.iter().map(|r| r.ndcg_ins).collect::<Vec<_>>()),
            rev: avg_some(&recs.iter().map(|r| r.ndcg_rev).collect::<Vec<_>>()),
        },
        mrr1: ModeTriple {
            ori: avg(&mrr_ori),
            ins: avg(&recs.iter().map(|r| r.mrr1_ins).collect::<Vec<_>>()),
            rev: avg_some(&recs.iter().map(|r| r.mrr1_rev).collect::<Vec<_>>()),
        },
        // one value per core in original mode, so the minimum is the value
        robustness: ModeTriple {
            ori: avg(&ndcg_ori),
            ins: avg(&rob_ins),
            rev: if rob_rev.is_empty() { None } else { Some(avg(&rob_rev)) },
        },
        p_mrr: avg(&recs.iter().map(|r| r.p_mrr).collect::<Vec<_>>()),
        wise_act: act,
        wise_ideal: ideal,
        per: if ideal > 0.0 { Some((ideal - act) / ideal) } else { None },
        sicr: hits as f64 / recs.len() as f64,
        query_count: recs.len(),
        core_count: cores.len(),
        degenerate_reversed: recs.iter().filter(|r| r.ndcg_rev.is_none()).count(),
    }
}

/// Recomputes the full evaluation of one system.
pub fn oracle_metrics(dataset: &Dataset, run: &RunSet, cfg: &MetricConfig) -> Result<SystemEvaluation, OracleError> {
    let count = dataset.instructed_queries.len();
    if count > MAX_ORACLE_QUERIES {
        return Err(OracleError::TooLarge { count });
    }
    if count == 0 {
        return Err(OracleError::Empty);
    }
    let mut records = Vec::new();
    for q in dataset.instructed_queries.values() {
        let core = dataset.core_queries.get(&q.core_id).ok_or_else(|| OracleError::UnknownCore(q.query_id.clone()))?;
        let ori = find(run, &q.core_id, Mode::Original)?;
        let ins = find(run, &q.query_id, Mode::Instructed)?;
        let rev = find(run, &q.query_id, Mode::Reversed)?;
        let (r_ori, s_ori) = locate(ori, &q.gold_doc_id);
        let (r_ins, s_ins) = locate(ins, &q.gold_doc_id);
        let (r_rev, s_rev) = locate(rev, &q.gold_doc_id);
        let n = core.positives.len();

        let all_pos: Vec<&str> = core.positives.iter().map(|p| p.doc_id.as_str()).collect();
        let gold = [q.gold_doc_id.as_str()];
        let others: Vec<&str> = all_pos.iter().copied().filter(|d| *d != q.gold_doc_id).collect();

        let rank_ok = r_ins < r_ori && r_ori < r_rev;
        let score_ok = match (s_ins, s_ori, s_rev) {
            // a missing score is below everything, so it can only sit on the
            // smaller side of a comparison
            (Some(i), Some(o), Some(r)) => i > o && o > r,
            (Some(i), Some(o), None) => i > o,
            (Some(_), None, _) => false,
            (None, _, _) => false,
        };
        records.push(EvalRecord {
            query_id: q.query_id.clone(),
            core_id: q.core_id.clone(),
            dimension: q.dimension,
            r_ori,
            r_ins,
            r_rev,
            s_ori,
            s_ins,
            s_rev,
            n_positives: n,
            wise_f: wise_of(r_ori, r_ins, r_rev, n, cfg.k_wise),
            wise_ideal: ideal_of(r_ori, n, cfg.k_wise),
            sicr_i: rank_ok && score_ok,
            p_mrr: p_mrr(r_ori, r_ins, cfg.p_mrr_sign),
            ndcg_ori: ndcg(ori, &all_pos, cfg.k_ndcg),
            ndcg_ins: ndcg(ins, &gold, cfg.k_ndcg),
            ndcg_rev: (!others.is_empty()).then(|| ndcg(rev, &others, cfg.k_ndcg)),
            mrr1_ori: mrr1(ori, &all_pos),
            mrr1_ins: mrr1(ins, &gold),
            mrr1_rev: (!others.is_empty()).then(|| mrr1(rev, &others)),
        });
    }

    let mut by_dim: BTreeMap<Dimension, Vec<&EvalRecord>> = BTreeMap::new();
    for r in &records {
        by_dim.entry(r.dimension).or_default().push(r);
    }
    let dimensions: Vec<DimensionSummary> = by_dim.iter().map(|(d, rs)| summarize(Scope::Dimension(*d), rs)).collect();

    let col = |f: &dyn Fn(&DimensionSummary) -> f64| avg(&dimensions.iter().map(f).collect::<Vec<_>>());
    let col_opt = |f: &dyn Fn(&DimensionSummary) -> Option<f64>| avg_some(&dimensions.iter().map(f).collect::<Vec<_>>());
    let act = col(&|d| d.wise_act);
    let ideal = col(&|d| d.wise_ideal);
    let overall = DimensionSummary {
        scope: Scope::Overall,
        ndcg: ModeTriple { ori: col(&|d| d.ndcg.ori), ins: col(&|d| d.ndcg.ins), rev: col_opt(&|d| d.ndcg.rev) },
        mrr1: ModeTriple { ori: col(&|d| d.mrr1.ori), ins: col(&|d| d.mrr1.ins), rev: col_opt(&|d| d.mrr1.rev) },
        robustness: ModeTriple {
            ori: col(&|d| d.robustness.ori),
            ins: col(&|d| d.robustness.ins),
            rev: col_opt(&|d| d.robustness.rev),
        },
        p_mrr: col(&|d| d.p_mrr),
        wise_act: act,
        wise_ideal: ideal,
        per: if ideal > 0.0 { Some((ideal - act) / ideal) } else { None },
        sicr: col(&|d| d.sicr),
        query_count: dimensions.iter().map(|d| d.query_count).sum(),
        core_count: dimensions.iter().map(|d| d.core_count).sum(),
        degenerate_reversed: dimensions.iter().map(|d| d.degenerate_reversed).sum(),
    };
    Ok(SystemEvaluation { system_id: run.system_id.clone(), records, dimensions, overall })
}

/// Expected per-query WISE when each of the three lists is an independent
/// uniform shuffle of a `pool`-document candidate set truncated to `depth`.
/// Enumerates all `pool^3` gold-rank triples.
pub fn expected_random_wise(pool: usize, depth: usize, n: usize, k: usize) -> f64 {
    let resolve = |r: usize| if r <= depth { r } else { depth + 1 };
    let mut total = 0.0;
    for o in 1..=pool {
        for i in 1..=pool {
            for r in 1..=pool {
                total += wise_of(resolve(o), resolve(i), resolve(r), n, k);
            }
        }
    }
    total / (pool * pool * pool) as f64
}

/// One field where two evaluations disagree.
#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub location: String,
    pub field: &'static str,
    pub left: String,
    pub right: String,
}

impl std::fmt::Display for Mismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}: {} vs {}", self.location, self.field, self.left, self.right)
    }
}

struct Differ {
    tol: f64,
    out: Vec<Mismatch>,
}

impl Differ {
    fn real(&mut self, loc: &str, field: &'static str, a: f64, b: f64) {
        let same = a == b || (a - b).abs() <= self.tol || (a.is_nan() && b.is_nan());
        if !same {
            self.push(loc, field, a, b);
        }
    }

    fn opt(&mut self, loc: &str, field: &'static str, a: Option<f64>, b: Option<f64>) {
        match (a, b) {
            (Some(x), Some(y)) => self.real(loc, field, x, y),
            (None, None) => {}
            _ => self.push(loc, field, format!("{a:?}"), format!("{b:?}")),
        }
    }

    fn exact<T: PartialEq + std::fmt::Debug>(&mut self, loc: &str, field: &'static str, a: T, b: T) {
        if a != b {
            self.push(loc, field, format!("{a:?}"), format!("{b:?}"));
        }
    }

    fn push(&mut self, loc: &str, field: &'static str, a: impl std::fmt::Display, b: impl std::fmt::Display) {
        self.out.push(Mismatch { location: loc.to_string(), field, left: a.to_string(), right: b.to_string() });
    }

    fn triple(&mut self, loc: &str, names: [&'static str; 3], a: &ModeTriple, b: &ModeTriple) {
        self.real(loc, names[0], a.ori, b.ori);
        self.real(loc, names[1], a.ins, b.ins);
        self.opt(loc, names[2], a.rev, b.rev);
    }

    fn summary(&mut self, a: &DimensionSummary, b: &DimensionSummary) {
        let loc = a.scope.to_string();
        self.exact(&loc, "scope", a.scope, b.scope);
        self.triple(&loc, ["ndcg_ori", "ndcg_ins", "ndcg_rev"], &a.ndcg, &b.ndcg);
        self.triple(&loc, ["mrr1_ori", "mrr1_ins", "mrr1_rev"], &a.mrr1, &b.mrr1);
        self.triple(&loc, ["robustness_ori", "robustness_ins", "robustness_rev"], &a.robustness, &b.robustness);
        self.real(&loc, "p_mrr", a.p_mrr, b.p_mrr);
        self.real(&loc, "wise_act", a.wise_act, b.wise_act);
        self.real(&loc, "wise_ideal", a.wise_ideal, b.wise_ideal);
        self.opt(&loc, "per", a.per, b.per);
        self.real(&loc, "sicr", a.sicr, b.sicr);
        self.exact(&loc, "query_count", a.query_count, b.query_count);
        self.exact(&loc, "core_count", a.core_count, b.core_count);
        self.exact(&loc, "degenerate_reversed", a.degenerate_reversed, b.degenerate_reversed);
    }
}

/// Field-by-field comparison with absolute tolerance `tol` on reals.
pub fn compare_evaluations(a: &SystemEvaluation, b: &SystemEvaluation, tol: f64) -> Vec<Mismatch> {
    let mut d = Differ { tol, out: Vec::new() };
    d.exact("system", "system_id", &a.system_id, &b.system_id);
    d.exact("system", "record_count", a.records.len(), b.records.len());
    for (x, y) in a.records.iter().zip(&b.records) {
        let loc = x.query_id.as_str();
        d.exact(loc, "query_id", &x.query_id, &y.query_id);
        d.exact(loc, "core_id", &x.core_id, &y.core_id);
        d.exact(loc, "dimension", x.dimension, y.dimension);
        d.exact(loc, "r_ori", x.r_ori, y.r_ori);
        d.exact(loc, "r_ins", x.r_ins, y.r_ins);
        d.exact(loc, "r_rev", x.r_rev, y.r_rev);
        d.opt(loc, "s_ori", x.s_ori, y.s_ori);
        d.opt(loc, "s_ins", x.s_ins, y.s_ins);
        d.opt(loc, "s_rev", x.s_rev, y.s_rev);
        d.exact(loc, "n_positives", x.n_positives, y.n_positives);
        d.real(loc, "wise_f", x.wise_f, y.wise_f);
        d.real(loc, "wise_ideal", x.wise_ideal, y.wise_ideal);
        d.exact(loc, "sicr_i", x.sicr_i, y.sicr_i);
        d.real(loc, "p_mrr", x.p_mrr, y.p_mrr);
        d.real(loc, "ndcg_ori", x.ndcg_ori, y.ndcg_ori);
        d.real(loc, "ndcg_ins", x.ndcg_ins, y.ndcg_ins);
        d.opt(loc, "ndcg_rev", x.ndcg_rev, y.ndcg_rev);
        d.real(loc, "mrr1_ori", x.mrr1_ori, y.mrr1_ori);
        d.real(loc, "mrr1_ins", x.mrr1_ins, y.mrr1_ins);
        d.opt(loc, "mrr1_rev", x.mrr1_rev, y.mrr1_rev);
    }
    d.exact("system", "dimension_count", a.dimensions.len(), b.dimensions.len());
    for (x, y) in a.dimensions.iter().zip(&b.dimensions) {
        d.summary(x, y);
    }
    d.summary(&a.overall, &b.overall);
    d.out
}
