//! Evaluation reports as JSON or CSV.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use wordspot_core::eval::{proposal_recall, EvalConfig, EvalReport, GroundTruth, QueryMode};
use wordspot_core::index::QueryConfig;
use wordspot_core::BBox;

use crate::error::{Error, Result};
use crate::formats::IndexFile;

/// Settings an evaluation ran with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub mode: QueryMode,
    pub overlaps: Vec<f64>,
    pub query: QueryConfig,
    pub queries: usize,
    pub ground_truth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRow {
    pub overlap: f64,
    pub query: String,
    pub relevant: usize,
    pub ap: f64,
}

/// `map` and `recall` are keyed by the overlap threshold as written in the
/// config (`"0.25"`, `"0.5"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: ReportConfig,
    pub per_query: Vec<QueryRow>,
    pub map: BTreeMap<String, f64>,
    pub recall: BTreeMap<String, f64>,
}

fn key(t: f64) -> String {
    format!("{t}")
}

/// Recall of the retained index proposals against ground truth, per page.
pub fn index_recall(index: &IndexFile, gts: &[GroundTruth], t_o: f64) -> f64 {
    let mut props: Vec<Vec<BBox>> = Vec::new();
    let mut boxes: Vec<Vec<BBox>> = Vec::new();
    for page in &index.pages {
        let g: Vec<BBox> = gts.iter().filter(|g| g.page_id == page.page_id).map(|g| g.bbox).collect();
        props.push(page.proposals.iter().map(|p| p.bbox).collect());
        boxes.push(g);
    }
    proposal_recall(&props, &boxes, t_o)
}

pub fn build_report(report: &EvalReport, index: &IndexFile, gts: &[GroundTruth], cfg: &EvalConfig) -> Report {
    let mut per_query = Vec::new();
    let mut map = BTreeMap::new();
    let mut recall = BTreeMap::new();
    for o in &report.overlaps {
        map.insert(key(o.overlap), o.map);
        recall.insert(key(o.overlap), index_recall(index, gts, o.overlap));
        per_query.extend(o.per_query.iter().map(|q| QueryRow { overlap: o.overlap, query: q.query.clone(), relevant: q.r, ap: q.ap }));
    }
    Report {
        config: ReportConfig {
            mode: report.mode,
            overlaps: cfg.overlaps.clone(),
            query: index.query,
            queries: report.overlaps.first().map_or(0, |o| o.per_query.len()),
            ground_truth: gts.len(),
        },
        per_query,
        map,
        recall,
    }
}

pub fn to_json(report: &Report) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

/// One row per query and overlap, then `map` and `recall` rows with an
/// empty query column.
pub fn to_csv(report: &Report) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::Internal(format!("csv: {e}"));
    w.write_record(["kind", "overlap", "query", "relevant", "value"]).map_err(fail)?;
    for q in &report.per_query {
        w.write_record(["ap", &key(q.overlap), &q.query, &q.relevant.to_string(), &q.ap.to_string()]).map_err(fail)?;
    }
    for (kind, table) in [("map", &report.map), ("recall", &report.recall)] {
        for (t, v) in table {
            w.write_record([kind, t, "", "", &v.to_string()]).map_err(fail)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Internal(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
}
