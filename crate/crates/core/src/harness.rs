//! Three-mode evaluation protocol.
//!
//! Joins a [`Dataset`] with one system's [`RunSet`], builds the gold-document
//! context of every instructed query, runs the metric kernel and aggregates
//! per dimension and overall.
//!
//! List keys: original-mode lists are keyed by `core_id`; instructed- and
//! reversed-mode lists are keyed by the instructed query's `query_id`.

use std::collections::{BTreeMap, HashSet};

use thiserror::Error;

use crate::metrics::{
    self, mrr_at_1, ndcg_at_k, p_mrr_doc, robustness_at_k, sicr_indicator, wise_ideal_query,
    wise_query, GoldContext, MetricConfig, MetricError,
};
use crate::model::{Dataset, Dimension, InstructedQuery, Mode, RankedList, RunSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("run has no {mode} list for {query_key}")]
    MissingList { query_key: String, mode: Mode },
    #[error("instructed query {query_id}: gold document is the only positive, reversed relevant set is empty")]
    DegenerateReversed { query_id: String },
    #[error("instructed query {query_id} references unknown core query {core_id}")]
    UnknownCore { query_id: String, core_id: String },
    #[error("no instructed queries to evaluate")]
    NothingToEvaluate,
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Per-instructed-query evaluation results.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub query_id: String,
    pub core_id: String,
    pub dimension: Dimension,
    /// Resolved ranks (absent documents placed at depth + 1).
    pub r_ori: usize,
    pub r_ins: usize,
    pub r_rev: usize,
    pub s_ori: Option<f64>,
    pub s_ins: Option<f64>,
    pub s_rev: Option<f64>,
    pub n_positives: usize,
    pub wise_f: f64,
    pub wise_ideal: f64,
    pub sicr_i: bool,
    pub p_mrr: f64,
    /// Of the core query's original list, shared by all its variants.
    pub ndcg_ori: f64,
    pub ndcg_ins: f64,
    /// `None` when the reversed relevant set is empty.
    pub ndcg_rev: Option<f64>,
    pub mrr1_ori: f64,
    pub mrr1_ins: f64,
    pub mrr1_rev: Option<f64>,
}

/// One value per mode; `rev` is `None` when no query of the scope has a
/// non-empty reversed relevant set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeTriple {
    pub ori: f64,
    pub ins: f64,
    pub rev: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scope {
    Dimension(Dimension),
    Overall,
}

impl std::fmt::Display for Scope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scope::Dimension(d) => d.fmt(f),
            Scope::Overall => f.write_str("overall"),
        }
    }
}

/// Aggregated metrics of one dimension, or of the overall row.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionSummary {
    pub scope: Scope,
    pub ndcg: ModeTriple,
    pub mrr1: ModeTriple,
    pub robustness: ModeTriple,
    pub p_mrr: f64,
    pub wise_act: f64,
    pub wise_ideal: f64,
    /// `(wise_ideal - wise_act) / wise_ideal`; `None` if the ideal is not positive.
    pub per: Option<f64>,
    pub sicr: f64,
    pub query_count: usize,
    pub core_count: usize,
    /// Instructed queries left out of the reversed-mode nDCG/MRR columns.
    pub degenerate_reversed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemEvaluation {
    pub system_id: String,
    pub records: Vec<EvalRecord>,
    pub dimensions: Vec<DimensionSummary>,
    pub overall: DimensionSummary,
}

impl SystemEvaluation {
    /// Dimension rows followed by the overall row.
    pub fn rows(&self) -> impl Iterator<Item = &DimensionSummary> {
        self.dimensions.iter().chain(std::iter::once(&self.overall))
    }
}

fn list<'a>(runset: &'a RunSet, query_key: &str, mode: Mode) -> Result<&'a RankedList, HarnessError> {
    runset.get(query_key, mode).ok_or_else(|| HarnessError::MissingList {
        query_key: query_key.to_string(),
        mode,
    })
}

fn gold_context(dataset: &Dataset, runset: &RunSet, iq: &InstructedQuery) -> Result<GoldContext, HarnessError> {
    let core = dataset.core_queries.get(&iq.core_id).ok_or_else(|| HarnessError::UnknownCore {
        query_id: iq.query_id.clone(),
        core_id: iq.core_id.clone(),
    })?;
    let ori = list(runset, &iq.core_id, Mode::Original)?;
    let ins = list(runset, &iq.query_id, Mode::Instructed)?;
    let rev = list(runset, &iq.query_id, Mode::Reversed)?;
    let gold = iq.gold_doc_id.as_str();
    Ok(GoldContext {
        r_ori: ori.rank_of(gold),
        r_ins: ins.rank_of(gold),
        r_rev: rev.rank_of(gold),
        s_ori: ori.score_of(gold),
        s_ins: ins.score_of(gold),
        s_rev: rev.score_of(gold),
        n_positives: core.positives.len(),
        depth_ori: ori.len(),
        depth_ins: ins.len(),
        depth_rev: rev.len(),
    })
}

/// One gold context per instructed query, in `query_id` order.
pub fn build_gold_contexts<'a>(
    dataset: &'a Dataset,
    runset: &RunSet,
) -> Result<Vec<(&'a InstructedQuery, GoldContext)>, HarnessError> {
    dataset
        .instructed_queries
        .values()
        .map(|iq| Ok((iq, gold_context(dataset, runset, iq)?)))
        .collect()
}

/// Relevant documents per mode for one instructed query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelevanceSets<'a> {
    pub original: HashSet<&'a str>,
    pub instructed: HashSet<&'a str>,
    pub reversed: HashSet<&'a str>,
}

type DocSet<'a> = HashSet<&'a str>;

fn relevance_sets_lenient<'a>(
    dataset: &'a Dataset,
    iq: &'a InstructedQuery,
) -> Result<(DocSet<'a>, DocSet<'a>, Option<DocSet<'a>>), HarnessError> {
    let core = dataset.core_queries.get(&iq.core_id).ok_or_else(|| HarnessError::UnknownCore {
        query_id: iq.query_id.clone(),
        core_id: iq.core_id.clone(),
    })?;
    let original: HashSet<&str> = core.positive_ids().collect();
    let instructed: HashSet<&str> = std::iter::once(iq.gold_doc_id.as_str()).collect();
    let reversed: HashSet<&str> = original.iter().copied().filter(|d| *d != iq.gold_doc_id).collect();
    let reversed = (!reversed.is_empty()).then_some(reversed);
    Ok((original, instructed, reversed))
}

/// Original: all positives of the core query. Instructed: the gold document.
/// Reversed: the core positives other than the gold document.
pub fn relevance_sets<'a>(dataset: &'a Dataset, iq: &'a InstructedQuery) -> Result<RelevanceSets<'a>, HarnessError> {
    let (original, instructed, reversed) = relevance_sets_lenient(dataset, iq)?;
    let reversed = reversed.ok_or_else(|| HarnessError::DegenerateReversed { query_id: iq.query_id.clone() })?;
    Ok(RelevanceSets { original, instructed, reversed })
}

fn evaluate_query(
    dataset: &Dataset,
    runset: &RunSet,
    iq: &InstructedQuery,
    cfg: &MetricConfig,
) -> Result<EvalRecord, HarnessError> {
    let ctx = gold_context(dataset, runset, iq)?;
    let resolved = ctx.resolve(cfg.absent_rank_policy);
    let (rel_ori, rel_ins, rel_rev) = relevance_sets_lenient(dataset, iq)?;
    let ori = list(runset, &iq.core_id, Mode::Original)?;
    let ins = list(runset, &iq.query_id, Mode::Instructed)?;
    let rev = list(runset, &iq.query_id, Mode::Reversed)?;
    let k = cfg.k_ndcg;
    Ok(EvalRecord {
        query_id: iq.query_id.clone(),
        core_id: iq.core_id.clone(),
        dimension: iq.dimension,
        r_ori: resolved.r_ori,
        r_ins: resolved.r_ins,
        r_rev: resolved.r_rev,
        s_ori: ctx.s_ori,
        s_ins: ctx.s_ins,
        s_rev: ctx.s_rev,
        n_positives: ctx.n_positives,
        wise_f: wise_query(&resolved, cfg)?,
        wise_ideal: wise_ideal_query(resolved.r_ori, ctx.n_positives, cfg.k_wise),
        sicr_i: sicr_indicator(&resolved),
        p_mrr: p_mrr_doc(resolved.r_ori, resolved.r_ins, cfg.p_mrr_sign),
        ndcg_ori: ndcg_at_k(ori, &rel_ori, k)?,
        ndcg_ins: ndcg_at_k(ins, &rel_ins, k)?,
        ndcg_rev: rel_rev.as_ref().map(|r| ndcg_at_k(rev, r, k)).transpose()?,
        mrr1_ori: mrr_at_1(ori, &rel_ori)?,
        mrr1_ins: mrr_at_1(ins, &rel_ins)?,
        mrr1_rev: rel_rev.as_ref().map(|r| mrr_at_1(rev, r)).transpose()?,
    })
}

fn mean_opt(values: &[f64]) -> Result<Option<f64>, MetricError> {
    if values.is_empty() {
        Ok(None)
    } else {
        metrics::mean(values).map(Some)
    }
}

fn per_fraction(act: f64, ideal: f64) -> Option<f64> {
    (ideal > 0.0).then(|| (ideal - act) / ideal)
}

/// Aggregates the records of one dimension.
pub fn summarize_dimension(dimension: Dimension, records: &[&EvalRecord]) -> Result<DimensionSummary, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::NothingToEvaluate);
    }
    let field = |f: fn(&EvalRecord) -> f64| records.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let opt_field = |f: fn(&EvalRecord) -> Option<f64>| records.iter().filter_map(|r| f(r)).collect::<Vec<f64>>();

    // Original-mode values belong to the core query, so they are averaged
    // once per core rather than once per variant.
    let mut by_core: BTreeMap<&str, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        by_core.entry(r.core_id.as_str()).or_default().push(r);
    }
    let core_ndcg_ori: Vec<f64> = by_core.values().map(|rs| rs[0].ndcg_ori).collect();
    let core_mrr1_ori: Vec<f64> = by_core.values().map(|rs| rs[0].mrr1_ori).collect();

    let ori_groups: Vec<Vec<f64>> = core_ndcg_ori.iter().map(|v| vec![*v]).collect();
    let ins_groups: Vec<Vec<f64>> = by_core.values().map(|rs| rs.iter().map(|r| r.ndcg_ins).collect()).collect();
    let rev_groups: Vec<Vec<f64>> = by_core
        .values()
        .map(|rs| rs.iter().filter_map(|r| r.ndcg_rev).collect::<Vec<f64>>())
        .filter(|g| !g.is_empty())
        .collect();

    let wise_act = metrics::wise(&field(|r| r.wise_f))?;
    let wise_ideal = metrics::mean(&field(|r| r.wise_ideal))?;
    let indicators: Vec<bool> = records.iter().map(|r| r.sicr_i).collect();
    Ok(DimensionSummary {
        scope: Scope::Dimension(dimension),
        ndcg: ModeTriple {
            ori: metrics::mean(&core_ndcg_ori)?,
            ins: metrics::mean(&field(|r| r.ndcg_ins))?,
            rev: mean_opt(&opt_field(|r| r.ndcg_rev))?,
        },
        mrr1: ModeTriple {
            ori: metrics::mean(&core_mrr1_ori)?,
            ins: metrics::mean(&field(|r| r.mrr1_ins))?,
            rev: mean_opt(&opt_field(|r| r.mrr1_rev))?,
        },
        robustness: ModeTriple {
            ori: robustness_at_k(&ori_groups)?,
            ins: robustness_at_k(&ins_groups)?,
            rev: if rev_groups.is_empty() { None } else { Some(robustness_at_k(&rev_groups)?) },
        },
        p_mrr: metrics::mean(&field(|r| r.p_mrr))?,
        wise_act,
        wise_ideal,
        per: per_fraction(wise_act, wise_ideal),
        sicr: metrics::sicr(&indicators)?,
        query_count: records.len(),
        core_count: by_core.len(),
        degenerate_reversed: records.iter().filter(|r| r.ndcg_rev.is_none()).count(),
    })
}

/// Unweighted mean of dimension rows. Per. is recomputed from the averaged
/// WISE columns so it stays consistent with them.
pub fn summarize_overall(rows: &[DimensionSummary]) -> Result<DimensionSummary, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::NothingToEvaluate);
    }
    let avg = |f: fn(&DimensionSummary) -> f64| metrics::mean(&rows.iter().map(f).collect::<Vec<f64>>());
    let avg_opt = |f: fn(&DimensionSummary) -> Option<f64>| mean_opt(&rows.iter().filter_map(f).collect::<Vec<f64>>());
    let wise_act = avg(|r| r.wise_act)?;
    let wise_ideal = avg(|r| r.wise_ideal)?;
    Ok(DimensionSummary {
        scope: Scope::Overall,
        ndcg: ModeTriple { ori: avg(|r| r.ndcg.ori)?, ins: avg(|r| r.ndcg.ins)?, rev: avg_opt(|r| r.ndcg.rev)? },
        mrr1: ModeTriple { ori: avg(|r| r.mrr1.ori)?, ins: avg(|r| r.mrr1.ins)?, rev: avg_opt(|r| r.mrr1.rev)? },
        robustness: ModeTriple {
            ori: avg(|r| r.robustness.ori)?,
            ins: avg(|r| r.robustness.ins)?,
            rev: avg_opt(|r| r.robustness.rev)?,
        },
        p_mrr: avg(|r| r.p_mrr)?,
        wise_act,
        wise_ideal,
        per: per_fraction(wise_act, wise_ideal),
        sicr: avg(|r| r.sicr)?,
        query_count: rows.iter().map(|r| r.query_count).sum(),
        core_count: rows.iter().map(|r| r.core_count).sum(),
        degenerate_reversed: rows.iter().map(|r| r.degenerate_reversed).sum(),
    })
}

/// Evaluates one system over every instructed query of the dataset.
pub fn evaluate_system(dataset: &Dataset, runset: &RunSet, cfg: &MetricConfig) -> Result<SystemEvaluation, HarnessError> {
    cfg.validate()?;
    let records = dataset
        .instructed_queries
        .values()
        .map(|iq| evaluate_query(dataset, runset, iq, cfg))
        .collect::<Result<Vec<_>, _>>()?;

    let mut by_dim: BTreeMap<Dimension, Vec<&EvalRecord>> = BTreeMap::new();
    for r in &records {
        by_dim.entry(r.dimension).or_default().push(r);
    }
    let dimensions = by_dim
        .iter()
        .map(|(d, rs)| summarize_dimension(*d, rs))
        .collect::<Result<Vec<_>, _>>()?;
    let overall = summarize_overall(&dimensions)?;
    Ok(SystemEvaluation { system_id: runset.system_id.clone(), records, dimensions, overall })
}
