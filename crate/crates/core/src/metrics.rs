//! CMC and mAP over ranked gallery lists.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamming::{rank_all, CodeMatrix, RankedList};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// `cmc[r - 1]` is the fraction of scored queries matched within rank `r`.
    pub cmc: Vec<f64>,
    pub map: f64,
    pub num_queries: usize,
    #[serde(rename = "skipped")]
    pub num_queries_skipped: usize,
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (r, v) in self.cmc.iter().enumerate() {
            writeln!(f, "rank_{} = {v:.6}", r + 1)?;
        }
        writeln!(f, "map = {:.6}", self.map)?;
        writeln!(f, "num_queries = {}", self.num_queries)?;
        writeln!(f, "skipped = {}", self.num_queries_skipped)
    }
}

/// Average precision of one ranking, or `None` when nothing in it is relevant.
pub fn average_precision<D>(ranking: &RankedList<D>, query_label: u32, gallery_labels: &[u32]) -> Option<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, &g) in ranking.indices.iter().enumerate() {
        if gallery_labels[g] == query_label {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

/// 1-based rank of the first relevant item.
pub fn first_match_rank<D>(ranking: &RankedList<D>, query_label: u32, gallery_labels: &[u32]) -> Option<usize> {
    ranking
        .indices
        .iter()
        .position(|&g| gallery_labels[g] == query_label)
        .map(|p| p + 1)
}

/// CMC curve up to `max_rank`; queries without any relevant item are left out.
pub fn cmc_curve<D>(
    rankings: &[RankedList<D>],
    query_labels: &[u32],
    gallery_labels: &[u32],
    max_rank: usize,
) -> Vec<f64> {
    let mut counts = vec![0usize; max_rank];
    let mut scored = 0usize;
    for ranking in rankings {
        let label = query_labels[ranking.query_index];
        if let Some(r) = first_match_rank(ranking, label, gallery_labels) {
            scored += 1;
            if r <= max_rank {
                counts[r - 1] += 1;
            }
        }
    }
    let mut acc = 0usize;
    counts
        .into_iter()
        .map(|c| {
            acc += c;
            if scored == 0 {
                0.0
            } else {
                acc as f64 / scored as f64
            }
        })
        .collect()
}

/// Scores a set of complete rankings.
pub fn report_from_rankings<D>(
    rankings: &[RankedList<D>],
    query_labels: &[u32],
    gallery_labels: &[u32],
    max_rank: usize,
) -> EvalReport {
    let aps: Vec<f64> = rankings
        .iter()
        .filter_map(|r| average_precision(r, query_labels[r.query_index], gallery_labels))
        .collect();
    let map = if aps.is_empty() {
        0.0
    } else {
        aps.iter().sum::<f64>() / aps.len() as f64
    };
    EvalReport {
        cmc: cmc_curve(rankings, query_labels, gallery_labels, max_rank),
        map,
        num_queries: rankings.len(),
        num_queries_skipped: rankings.len() - aps.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    /// Remove gallery item `i` from query `i`'s ranking.
    pub exclude_self: bool,
    pub threads: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            exclude_self: false,
            threads: 1,
        }
    }
}

/// Ranks every query against the gallery and reports CMC up to `max_rank` and mAP.
pub fn evaluate(
    queries: &CodeMatrix,
    gallery: &CodeMatrix,
    max_rank: usize,
    opts: EvalOptions,
) -> Result<EvalReport> {
    if queries.is_empty() || gallery.is_empty() {
        return Err(Error::Validation("query and gallery code sets must be non-empty".into()));
    }
    if max_rank == 0 {
        return Err(Error::Validation("max rank must be at least 1".into()));
    }
    if opts.exclude_self && queries.len() != gallery.len() {
        return Err(Error::Validation(format!(
            "self-match exclusion needs equal-sized sets, got {} queries and {} gallery items",
            queries.len(),
            gallery.len()
        )));
    }
    let rankings = rank_all(queries, gallery, None, opts.exclude_self, opts.threads)?;
    Ok(report_from_rankings(&rankings, queries.labels(), gallery.labels(), max_rank))
}
