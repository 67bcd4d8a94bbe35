//! Metric kernel: nDCG@k, MRR@1, Robustness@k, p-MRR, SICR and WISE.
//!
//! Everything here is pure and deterministic. Values are unscaled; the
//! report layer multiplies by the configured report scale.
//!
//! Rank arguments are 1-based. Ranks of documents missing from a list are
//! resolved before they reach the kernel (see [`GoldContext::resolve`]).

use std::collections::HashSet;

use thiserror::Error;

use crate::model::RankedList;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("relevant set is empty")]
    EmptyRelevantSet,
    #[error("robustness group is empty")]
    EmptyGroup,
    #[error("no values to aggregate")]
    EmptyInput,
    #[error("cutoff must be at least 1")]
    ZeroCutoff,
    #[error("no penalty case matches ranks (ori={r_ori}, ins={r_ins}, rev={r_rev})")]
    InvariantBreach { r_ori: usize, r_ins: usize, r_rev: usize },
    #[error("invalid metric configuration: {0}")]
    InvalidConfig(String),
}

/// How ranks of documents absent from a list are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AbsentRankPolicy {
    /// One past the end of the list: no better than any retrieved document.
    #[default]
    DepthPlusOne,
}

/// Sign convention for p-MRR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PMrrSign {
    /// `MRR_og/MRR_new - 1` when the rank improved, `1 - MRR_new/MRR_og` otherwise.
    #[default]
    AsPrinted,
    /// The negation of [`PMrrSign::AsPrinted`].
    Flipped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricConfig {
    /// Cutoff for nDCG and Robustness.
    pub k_ndcg: usize,
    /// Top-K horizon of the WISE reward.
    pub k_wise: usize,
    pub absent_rank_policy: AbsentRankPolicy,
    pub p_mrr_sign: PMrrSign,
    pub report_scale: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            k_ndcg: 10,
            k_wise: 20,
            absent_rank_policy: AbsentRankPolicy::DepthPlusOne,
            p_mrr_sign: PMrrSign::AsPrinted,
            report_scale: 100.0,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if self.k_ndcg == 0 || self.k_wise == 0 {
            return Err(MetricError::InvalidConfig("k_ndcg and k_wise must be at least 1".into()));
        }
        if !(self.report_scale.is_finite() && self.report_scale > 0.0) {
            return Err(MetricError::InvalidConfig("report_scale must be positive".into()));
        }
        Ok(())
    }
}

/// Ranks and scores of one instructed query's gold document in all three
/// modes, as found in the lists (`None` = not retrieved).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoldContext {
    pub r_ori: Option<usize>,
    pub r_ins: Option<usize>,
    pub r_rev: Option<usize>,
    pub s_ori: Option<f64>,
    pub s_ins: Option<f64>,
    pub s_rev: Option<f64>,
    /// Number of positives of the core query.
    pub n_positives: usize,
    pub depth_ori: usize,
    pub depth_ins: usize,
    pub depth_rev: usize,
}

/// A [`GoldContext`] with every absent value replaced.
///
/// Absent scores become negative infinity, which orders below every finite
/// score and so fails every strict "greater than" comparison it is on the
/// left of.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedContext {
    pub r_ori: usize,
    pub r_ins: usize,
    pub r_rev: usize,
    pub s_ori: f64,
    pub s_ins: f64,
    pub s_rev: f64,
    pub n_positives: usize,
}

impl GoldContext {
    pub fn resolve(&self, policy: AbsentRankPolicy) -> ResolvedContext {
        let rank = |r: Option<usize>, depth: usize| match policy {
            AbsentRankPolicy::DepthPlusOne => r.unwrap_or(depth + 1),
        };
        let score = |s: Option<f64>| s.unwrap_or(f64::NEG_INFINITY);
        ResolvedContext {
            r_ori: rank(self.r_ori, self.depth_ori),
            r_ins: rank(self.r_ins, self.depth_ins),
            r_rev: rank(self.r_rev, self.depth_rev),
            s_ori: score(self.s_ori),
            s_ins: score(self.s_ins),
            s_rev: score(self.s_rev),
            n_positives: self.n_positives,
        }
    }
}

/// Binary-relevance nDCG@k with a `1 / log2(rank + 1)` discount.
pub fn ndcg_at_k(list: &RankedList, relevant: &HashSet<&str>, k: usize) -> Result<f64, MetricError> {
    if relevant.is_empty() {
        return Err(MetricError::EmptyRelevantSet);
    }
    if k == 0 {
        return Err(MetricError::ZeroCutoff);
    }
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let dcg: f64 = list
        .doc_ids()
        .take(k)
        .enumerate()
        .filter(|(_, d)| relevant.contains(d))
        .map(|(i, _)| discount(i))
        .sum();
    let ideal: f64 = (0..relevant.len().min(k)).map(discount).sum();
    Ok(dcg / ideal)
}

/// 1 if the top document is relevant, else 0 (also for an empty list).
pub fn mrr_at_1(list: &RankedList, relevant: &HashSet<&str>) -> Result<f64, MetricError> {
    if relevant.is_empty() {
        return Err(MetricError::EmptyRelevantSet);
    }
    Ok(match list.doc_ids().next() {
        Some(top) if relevant.contains(top) => 1.0,
        _ => 0.0,
    })
}

/// Mean over groups of the minimum score inside each group.
pub fn robustness_at_k<G: AsRef<[f64]>>(groups: &[G]) -> Result<f64, MetricError> {
    if groups.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut minima = Vec::with_capacity(groups.len());
    for group in groups {
        let group = group.as_ref();
        if group.is_empty() {
            return Err(MetricError::EmptyGroup);
        }
        minima.push(group.iter().copied().fold(f64::INFINITY, f64::min));
    }
    mean(&minima)
}

/// p-MRR of one document between its original rank `r_og` and new rank `r_new`.
pub fn p_mrr_doc(r_og: usize, r_new: usize, sign: PMrrSign) -> f64 {
    let mrr_og = 1.0 / r_og as f64;
    let mrr_new = 1.0 / r_new as f64;
    let value = if r_og > r_new { mrr_og / mrr_new - 1.0 } else { 1.0 - mrr_new / mrr_og };
    match sign {
        PMrrSign::AsPrinted => value,
        PMrrSign::Flipped => -value,
    }
}

/// Strict compliance: better rank and score when instructed, worse rank and
/// score when reversed.
pub fn sicr_indicator(ctx: &ResolvedContext) -> bool {
    ctx.r_ins < ctx.r_ori && ctx.s_ins > ctx.s_ori && ctx.r_ori < ctx.r_rev && ctx.s_ori > ctx.s_rev
}

pub fn sicr(indicators: &[bool]) -> Result<f64, MetricError> {
    if indicators.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    Ok(indicators.iter().filter(|&&i| i).count() as f64 / indicators.len() as f64)
}

/// Which piece of the WISE formula applies to a rank triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WiseBranch {
    /// `r_ins <= r_ori < r_rev`.
    Reward,
    /// `r_rev < r_ori < r_ins`: fixed -1.
    PenaltyInverted,
    /// `r_ori <= r_ins`: relative drop of the instructed rank.
    PenaltyInstructedDrop,
    /// `r_rev <= r_ori`: relative rise of the reversed rank.
    PenaltyReversedRise,
}

/// Penalty cases are tested top-down; the first match wins.
pub fn wise_branch(r_ori: usize, r_ins: usize, r_rev: usize) -> Option<WiseBranch> {
    if r_ins <= r_ori && r_ori < r_rev {
        Some(WiseBranch::Reward)
    } else if r_rev < r_ori && r_ori < r_ins {
        Some(WiseBranch::PenaltyInverted)
    } else if r_ori <= r_ins {
        Some(WiseBranch::PenaltyInstructedDrop)
    } else if r_rev <= r_ori {
        Some(WiseBranch::PenaltyReversedRise)
    } else {
        None
    }
}

/// Reward for a query whose gold document moved the right way.
///
/// `n` is the number of positives of the core query and `k` the top-K horizon.
pub fn wise_reward(r_ori: usize, r_ins: usize, n: usize, k: usize) -> f64 {
    if r_ori <= n && r_ins == 1 {
        1.0
    } else if r_ori <= k {
        let r_ori = r_ori as f64;
        let r_ins = r_ins as f64;
        (1.0 - (r_ori - r_ins) / k as f64) / r_ins.sqrt()
    } else {
        0.01
    }
}

pub fn wise_penalty(r_ori: usize, r_ins: usize, r_rev: usize) -> Result<f64, MetricError> {
    let (ori, ins, rev) = (r_ori as f64, r_ins as f64, r_rev as f64);
    match wise_branch(r_ori, r_ins, r_rev) {
        Some(WiseBranch::PenaltyInverted) => Ok(-1.0),
        Some(WiseBranch::PenaltyInstructedDrop) => Ok((ori - ins) / ins),
        Some(WiseBranch::PenaltyReversedRise) => Ok((rev - ori) / ori),
        Some(WiseBranch::Reward) | None => Err(MetricError::InvariantBreach { r_ori, r_ins, r_rev }),
    }
}

/// Per-query WISE score F(q), in [-1, 1].
pub fn wise_query(ctx: &ResolvedContext, cfg: &MetricConfig) -> Result<f64, MetricError> {
    if wise_branch(ctx.r_ori, ctx.r_ins, ctx.r_rev) == Some(WiseBranch::Reward) {
        Ok(wise_reward(ctx.r_ori, ctx.r_ins, ctx.n_positives, cfg.k_wise))
    } else {
        wise_penalty(ctx.r_ori, ctx.r_ins, ctx.r_rev)
    }
}

/// Best reward reachable from a given original rank: the maximum of
/// [`wise_reward`] over every instructed rank `1..=r_ori`, taking a reversed
/// rank below `r_ori` as always achievable.
pub fn wise_ideal_query(r_ori: usize, n: usize, k: usize) -> f64 {
    (1..=r_ori.max(1)).map(|r| wise_reward(r_ori, r, n, k)).fold(f64::NEG_INFINITY, f64::max)
}

/// Mean of per-query WISE scores.
pub fn wise(values: &[f64]) -> Result<f64, MetricError> {
    mean(values)
}

/// Arithmetic mean whose result depends only on the multiset of values.
///
/// Positive and negative parts are summed separately in ascending magnitude,
/// so permuting the input cannot change the rounding and negating every value
/// negates the mean exactly.
pub fn mean(values: &[f64]) -> Result<f64, MetricError> {
    if values.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut pos: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0 || v.is_nan()).collect();
    let mut neg: Vec<f64> = values.iter().map(|v| -v).filter(|v| *v > 0.0).collect();
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    let total = pos.iter().sum::<f64>() - neg.iter().sum::<f64>();
    Ok(total / values.len() as f64)
}
