//! Retrieval evaluation: average precision, MAP, proposal recall and the
//! threshold grid search.
//!
//! A hit is relevant when its IoU with a not-yet-matched ground-truth box of
//! the query label on the same page is strictly greater than `t_o`. Ground
//! truths are matched greedily in rank order, each at most once.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::embedder::TrainedModel;
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::image::GrayImage;
use crate::index::{embed_region, rank_by_vector, Hit, PageIndex};
use crate::text::normalize_label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub page_id: String,
    pub bbox: BBox,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryMode {
    Qbs,
    Qbe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Relevance IoU thresholds `t_o`.
    pub overlaps: Vec<f64>,
    pub mode: QueryMode,
    pub stopwords: Vec<String>,
    /// Candidate `t_s` values for the grid search.
    pub grid_score: Vec<f64>,
    /// Candidate `t_nms` values for the grid search.
    pub grid_nms: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            overlaps: vec![0.25, 0.5],
            mode: QueryMode::Qbs,
            stopwords: Vec::new(),
            grid_score: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            grid_nms: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.overlaps.is_empty() || self.overlaps.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return Err(Error::InvalidConfig("overlap thresholds must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// `sum_k P_k r_k / R` over a relevance pattern.
pub fn average_precision_from_relevance(relevant: &[bool], total_relevant: usize) -> Result<f64> {
    if total_relevant == 0 {
        return Err(Error::NoRelevantInstances);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &r) in relevant.iter().enumerate() {
        if r {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / total_relevant as f64)
}

/// Relevance of each ranked hit for `label`, and the number of ground
/// truths carrying that label. Labels are compared as given.
pub fn relevance(ranked: &[Hit], gts: &[GroundTruth], label: &str, t_o: f64) -> (Vec<bool>, usize) {
    let candidates: Vec<&GroundTruth> = gts.iter().filter(|g| g.label == label).collect();
    let mut used = vec![false; candidates.len()];
    let rel = ranked
        .iter()
        .map(|hit| {
            let mut best: Option<(f64, usize)> = None;
            for (j, g) in candidates.iter().enumerate() {
                if used[j] || g.page_id != hit.page_id {
                    continue;
                }
                let o = iou(&hit.bbox, &g.bbox);
                if o > t_o && best.is_none_or(|(b, _)| o > b) {
                    best = Some((o, j));
                }
            }
            match best {
                Some((_, j)) => {
                    used[j] = true;
                    true
                }
                None => false,
            }
        })
        .collect();
    (rel, candidates.len())
}

pub fn average_precision(ranked: &[Hit], gts: &[GroundTruth], label: &str, t_o: f64) -> Result<f64> {
    let (rel, r) = relevance(ranked, gts, label, t_o);
    average_precision_from_relevance(&rel, r)
}

pub fn mean_average_precision(aps: &[f64]) -> f64 {
    if aps.is_empty() {
        return 0.0;
    }
    aps.iter().sum::<f64>() / aps.len() as f64
}

/// Fraction of ground truths covered by some proposal with IoU above
/// `t_o`, averaged over pages that have ground truth.
pub fn proposal_recall(proposals: &[Vec<BBox>], gts: &[Vec<BBox>], t_o: f64) -> f64 {
    let mut total = 0.0;
    let mut pages = 0usize;
    for (props, page_gts) in proposals.iter().zip(gts) {
        if page_gts.is_empty() {
            continue;
        }
        let found = page_gts.iter().filter(|g| props.iter().any(|p| iou(p, g) > t_o)).count();
        total += found as f64 / page_gts.len() as f64;
        pages += 1;
    }
    if pages == 0 {
        0.0
    } else {
        total / pages as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query: String,
    pub ap: f64,
    /// Number of relevant instances `R`.
    pub r: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub overlap: f64,
    pub map: f64,
    pub per_query: Vec<QueryResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: QueryMode,
    pub overlaps: Vec<OverlapReport>,
}

impl EvalReport {
    pub fn map_at(&self, overlap: f64) -> Option<f64> {
        self.overlaps.iter().find(|o| o.overlap == overlap).map(|o| o.map)
    }
}

/// Ground truths with labels normalized to the model alphabet; entries
/// that normalize to nothing are dropped.
fn normalized_gts(gts: &[GroundTruth], model: &TrainedModel) -> Vec<GroundTruth> {
    gts.iter()
        .filter_map(|g| {
            normalize_label(&g.label, model.text.alphabet())
                .ok()
                .map(|label| GroundTruth { label, ..g.clone() })
        })
        .collect()
}

fn stopword_set(cfg: &EvalConfig, model: &TrainedModel) -> BTreeSet<String> {
    cfg.stopwords.iter().filter_map(|s| normalize_label(s, model.text.alphabet()).ok()).collect()
}

/// QbS evaluation: one query per unique ground-truth label.
pub fn evaluate_qbs(index: &[PageIndex], gts: &[GroundTruth], model: &TrainedModel, cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let gts = normalized_gts(gts, model);
    let stop = stopword_set(cfg, model);
    let queries: BTreeSet<&str> = gts.iter().map(|g| g.label.as_str()).filter(|l| !stop.contains(*l)).collect();
    let mut reports: Vec<OverlapReport> =
        cfg.overlaps.iter().map(|&t| OverlapReport { overlap: t, map: 0.0, per_query: Vec::new() }).collect();
    for q in queries {
        let hits = rank_by_vector(index, &model.embed_text(q)?, usize::MAX)?;
        for rep in reports.iter_mut() {
            let (rel, r) = relevance(&hits, &gts, q, rep.overlap);
            let ap = average_precision_from_relevance(&rel, r)?;
            rep.per_query.push(QueryResult { query: q.into(), ap, r });
        }
    }
    finish(QueryMode::Qbs, reports)
}

/// QbE evaluation: one query per ground-truth word crop. The query instance
/// is excluded from its own relevant set, and hits covering the query box
/// (IoU above `t_o`) are removed from its ranking. Queries without any
/// other instance are skipped.
pub fn evaluate_qbe(
    index: &[PageIndex],
    pages: &[(&str, &GrayImage)],
    gts: &[GroundTruth],
    model: &TrainedModel,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    let gts = normalized_gts(gts, model);
    let stop = stopword_set(cfg, model);
    let mut reports: Vec<OverlapReport> =
        cfg.overlaps.iter().map(|&t| OverlapReport { overlap: t, map: 0.0, per_query: Vec::new() }).collect();
    for (qi, query) in gts.iter().enumerate() {
        if stop.contains(&query.label) {
            continue;
        }
        let others: Vec<GroundTruth> =
            gts.iter().enumerate().filter(|&(j, _)| j != qi).map(|(_, g)| g.clone()).collect();
        if !others.iter().any(|g| g.label == query.label) {
            continue;
        }
        let page = index
            .iter()
            .find(|p| p.page_id == query.page_id)
            .ok_or_else(|| Error::UnknownPage(query.page_id.clone()))?;
        let img = pages
            .iter()
            .find(|(id, _)| *id == query.page_id)
            .map(|(_, img)| *img)
            .ok_or_else(|| Error::UnknownPage(query.page_id.clone()))?;
        let q = embed_region(page, img, &query.bbox, model)?;
        let hits = rank_by_vector(index, &q, usize::MAX)?;
        for rep in reports.iter_mut() {
            let t_o = rep.overlap;
            let ranked: Vec<Hit> = hits
                .iter()
                .filter(|h| !(h.page_id == query.page_id && iou(&h.bbox, &query.bbox) > t_o))
                .cloned()
                .collect();
            let (rel, r) = relevance(&ranked, &others, &query.label, t_o);
            let ap = average_precision_from_relevance(&rel, r)?;
            rep.per_query.push(QueryResult { query: query.label.clone(), ap, r });
        }
    }
    finish(QueryMode::Qbe, reports)
}

fn finish(mode: QueryMode, mut reports: Vec<OverlapReport>) -> Result<EvalReport> {
    for rep in reports.iter_mut() {
        let aps: Vec<f64> = rep.per_query.iter().map(|q| q.ap).collect();
        rep.map = mean_average_precision(&aps);
    }
    Ok(EvalReport { mode, overlaps: reports })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub score_threshold: f64,
    pub nms_overlap: f64,
    pub map: f64,
}

/// Exhaustive search over `t_s x t_nms`. Ties prefer the smaller `t_s`,
/// then the smaller `t_nms`.
pub fn grid_search(
    score_grid: &[f64],
    nms_grid: &[f64],
    mut evaluate: impl FnMut(f64, f64) -> Result<f64>,
) -> Result<GridResult> {
    if score_grid.is_empty() || nms_grid.is_empty() {
        return Err(Error::InvalidConfig("empty threshold grid".into()));
    }
    let mut best: Option<GridResult> = None;
    for &ts in score_grid {
        for &tn in nms_grid {
            let map = evaluate(ts, tn)?;
            let cand = GridResult { score_threshold: ts, nms_overlap: tn, map };
            let better = match best {
                None => true,
                Some(b) => {
                    map > b.map
                        || (map == b.map
                            && (ts < b.score_threshold || (ts == b.score_threshold && tn < b.nms_overlap)))
                }
            };
            if better {
                best = Some(cand);
            }
        }
    }
    Ok(best.expect("non-empty grid"))
}
