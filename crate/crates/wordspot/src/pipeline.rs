//! Dataset-level training, indexing, search and threshold tuning.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wordspot_core::augment::LabeledBox;
use wordspot_core::dtp::dtp_proposals;
use wordspot_core::embedder::{train, LabeledCrop, TrainConfig, TrainProgress, TrainedModel};
use wordspot_core::eval::{evaluate_qbs, grid_search, EvalConfig, GridResult, GroundTruth};
use wordspot_core::geometry::{label_proposals, MatchConfig, MatchLabel};
use wordspot_core::image::resize_longest_side;
use wordspot_core::index::{filter_page, query_by_example, query_by_string, score_page, Hit, IndexConfig, QueryConfig, ScoredPage};
use wordspot_core::text::TextEmbedder;
use wordspot_core::{BBox, GrayImage};

use crate::error::{Error, Result};
use crate::formats::{load_index, IndexFile};
use crate::io::{load_gray, load_page, Page, PageFile};

/// Training region on one of the working-resolution pages.
#[derive(Debug, Clone, PartialEq)]
pub struct CropSpec {
    pub page: usize,
    pub bbox: BBox,
    pub label: Option<String>,
    pub is_word: bool,
}

/// Working-resolution pages and the labeled regions on them: every
/// ground-truth box, proposals overlapping a word enough to count as that
/// word, and proposals clear of all words as background.
pub fn training_crops(pages: &[Page], index: &IndexConfig, matching: &MatchConfig) -> Result<(Vec<GrayImage>, Vec<CropSpec>)> {
    matching.validate()?;
    let work: Vec<(GrayImage, f64)> = pages.par_iter().map(|p| resize_longest_side(&p.image, index.resize_target)).collect();
    let proposals: Vec<Vec<BBox>> =
        work.par_iter().map(|(img, _)| dtp_proposals(img, &index.dtp)).collect::<wordspot_core::Result<_>>()?;
    let mut specs = Vec::new();
    for (i, page) in pages.iter().enumerate() {
        if page.words.is_empty() {
            continue;
        }
        let scale = work[i].1;
        let gts: Vec<BBox> = page.words.iter().map(|w| w.bbox.scaled(scale)).collect();
        for (g, w) in gts.iter().zip(&page.words) {
            specs.push(CropSpec { page: i, bbox: *g, label: Some(w.label.clone()), is_word: true });
        }
        for (p, l) in proposals[i].iter().zip(label_proposals(&proposals[i], &gts, matching)) {
            match l {
                MatchLabel::Positive { gt, .. } => {
                    specs.push(CropSpec { page: i, bbox: *p, label: Some(page.words[gt].label.clone()), is_word: true })
                }
                MatchLabel::Negative => specs.push(CropSpec { page: i, bbox: *p, label: None, is_word: false }),
                MatchLabel::Ignored => {}
            }
        }
    }
    Ok((work.into_iter().map(|(img, _)| img).collect(), specs))
}

pub fn train_model(
    pages: &[Page],
    text: &TextEmbedder,
    cfg: &TrainConfig,
    matching: &MatchConfig,
    index: &IndexConfig,
    progress: &mut dyn FnMut(&TrainProgress),
) -> Result<TrainedModel> {
    let (images, specs) = training_crops(pages, index, matching)?;
    let crops: Vec<LabeledCrop<'_>> = specs
        .iter()
        .map(|s| LabeledCrop { image: &images[s.page], bbox: s.bbox, label: s.label.as_deref(), is_word: s.is_word })
        .collect();
    Ok(train(&crops, text, cfg, progress)?)
}

/// Proposals with wordness and descriptors for in-memory pages, in order.
pub fn score_pages(pages: &[Page], model: &TrainedModel, index: &IndexConfig) -> Result<Vec<ScoredPage>> {
    pages
        .par_iter()
        .map(|p| {
            let path = p.file.image_path.to_string_lossy();
            Ok(score_page(&p.image, &p.file.id, &path, model, index.resize_target, &index.dtp)?)
        })
        .collect()
}

/// Scores page files independently; a page that fails to load or score
/// yields its own error.
pub fn score_files(files: &[PageFile], model: &TrainedModel, index: &IndexConfig) -> Vec<(String, Result<ScoredPage>)> {
    files
        .par_iter()
        .map(|f| {
            let scored = load_gray(&f.image_path).and_then(|img| {
                let path = f.image_path.to_string_lossy();
                Ok(score_page(&img, &f.id, &path, model, index.resize_target, &index.dtp)?)
            });
            (f.id.clone(), scored)
        })
        .collect()
}

pub fn assemble_index(scored: &[ScoredPage], model: &TrainedModel, query: &QueryConfig) -> Result<IndexFile> {
    query.validate()?;
    let mut pages: Vec<_> = scored.iter().map(|s| filter_page(s, query)).collect();
    pages.sort_by(|a, b| a.page_id.cmp(&b.page_id));
    Ok(IndexFile { query: *query, model: model.clone(), pages })
}

/// Mean QbS MAP over the configured overlaps for one threshold pair.
pub fn qbs_map(scored: &[ScoredPage], gts: &[GroundTruth], model: &TrainedModel, query: &QueryConfig, eval: &EvalConfig) -> Result<f64> {
    let pages: Vec<_> = scored.iter().map(|s| filter_page(s, query)).collect();
    let report = evaluate_qbs(&pages, gts, model, eval)?;
    Ok(report.overlaps.iter().map(|o| o.map).sum::<f64>() / report.overlaps.len() as f64)
}

/// Best `(t_s, t_nms)` on validation pages by mean QbS MAP.
pub fn tune_thresholds(
    scored: &[ScoredPage],
    gts: &[GroundTruth],
    model: &TrainedModel,
    base: &QueryConfig,
    eval: &EvalConfig,
) -> Result<GridResult> {
    let r = grid_search(&eval.grid_score, &eval.grid_nms, |ts, tn| {
        let q = QueryConfig { score_threshold: ts, nms_overlap: tn, ..*base };
        qbs_map(scored, gts, model, &q, eval).map_err(|e| match e {
            Error::Core(c) => c,
            other => wordspot_core::Error::InvalidConfig(other.to_string()),
        })
    })?;
    Ok(r)
}

/// A ranked hit in the wire format shared by the CLI and the HTTP API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireHit {
    pub rank: usize,
    pub page_id: String,
    /// Integer corner-form `[x, y, w, h]` in page pixels.
    #[serde(rename = "box")]
    pub bbox: [i64; 4],
    pub similarity: f64,
}

pub fn wire_hits(hits: &[Hit]) -> Vec<WireHit> {
    hits.iter()
        .enumerate()
        .map(|(i, h)| WireHit { rank: i + 1, page_id: h.page_id.clone(), bbox: h.bbox.to_int_xywh(), similarity: h.similarity })
        .collect()
}

pub fn search_text(index: &IndexFile, query: &str, k: usize) -> Result<Vec<WireHit>> {
    Ok(wire_hits(&query_by_string(&index.pages, query, &index.model, k)?))
}

/// Rewrites page image paths relative to `index_path`'s directory when the
/// images live under it, so an index and its pages can move together.
pub fn relativize_paths(index: &mut IndexFile, index_path: &Path) {
    let Some(base) = index_path.parent().map(absolute) else { return };
    for page in &mut index.pages {
        let p = absolute(Path::new(&page.image_path));
        page.image_path = match p.strip_prefix(&base) {
            Ok(rel) => rel.to_string_lossy().into_owned(),
            Err(_) => p.to_string_lossy().into_owned(),
        };
    }
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

/// Loads an index and resolves relative page image paths against its
/// directory.
pub fn open_index(path: &Path) -> Result<IndexFile> {
    let mut index = load_index(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    for page in &mut index.pages {
        let p = Path::new(&page.image_path);
        if p.is_relative() {
            page.image_path = base.join(p).to_string_lossy().into_owned();
        }
    }
    Ok(index)
}

/// Image path of an indexed page, looked up under `pages_dir` when given.
pub fn page_image_path(index: &IndexFile, page_id: &str, pages_dir: Option<&Path>) -> Result<PathBuf> {
    let page = index.page(page_id).ok_or_else(|| wordspot_core::Error::UnknownPage(page_id.into()))?;
    let stored = PathBuf::from(&page.image_path);
    Ok(match pages_dir {
        Some(dir) => dir.join(stored.file_name().unwrap_or(stored.as_os_str())),
        None => stored,
    })
}

/// Query-by-example with an integer `[x, y, w, h]` box on an indexed page.
pub fn search_example(index: &IndexFile, page_id: &str, bbox: [i64; 4], k: usize, pages_dir: Option<&Path>) -> Result<Vec<WireHit>> {
    let path = page_image_path(index, page_id, pages_dir)?;
    let img = load_gray(&path)?;
    let b = BBox::from_xywh(bbox[0] as f64, bbox[1] as f64, bbox[2] as f64, bbox[3] as f64);
    Ok(wire_hits(&query_by_example(&index.pages, page_id, &img, &b, &index.model, k)?))
}

/// Ground truth for a directory of pages with sidecars.
pub fn load_labeled(files: &[PageFile]) -> Result<Vec<Page>> {
    files.par_iter().map(load_page).collect()
}

pub fn labeled_boxes(words: &[LabeledBox]) -> Vec<BBox> {
    words.iter().map(|w| w.bbox).collect()
}
