//! Page indexing and the query pipeline.
//!
//! Indexing runs proposals, the wordness scorer and the embedder over a
//! page, drops proposals with wordness at or below `t_s`, and suppresses
//! overlaps at `t_nms`. Querying ranks every indexed proposal by cosine
//! similarity and applies a final zero-overlap NMS within each page.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dtp::{dtp_proposals, DtpConfig};
use crate::embedder::TrainedModel;
use crate::error::{Error, Result};
use crate::geometry::{iou, nms, BBox};
use crate::image::{resize_longest_side, GrayImage};

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub bbox: BBox,
    /// Sigmoid of the wordness logit.
    pub wordness: f64,
    /// Unit-norm region descriptor.
    pub descriptor: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PageIndex {
    pub page_id: String,
    pub image_path: String,
    pub width: u32,
    pub height: u32,
    /// Factor mapping page pixels to the working resolution.
    pub scale: f64,
    /// Number of external (DTP) proposals before filtering.
    pub n_dtp: usize,
    /// Total proposals before filtering. Equal to `n_dtp` without an RPN.
    pub n_total: usize,
    pub proposals: Vec<Proposal>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueryConfig {
    /// Wordness threshold `t_s`: proposals must score strictly above it.
    pub score_threshold: f64,
    /// Overlap threshold `t_nms` of the wordness NMS.
    pub nms_overlap: f64,
    /// Results returned per query.
    pub k: usize,
}

impl Default for QueryConfig {
    fn default() -> Self {
        Self { score_threshold: 0.5, nms_overlap: 0.5, k: 25 }
    }
}

impl QueryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.score_threshold) || !(0.0..=1.0).contains(&self.nms_overlap) {
            return Err(Error::InvalidConfig("t_s and t_nms must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexConfig {
    /// Longest page side at the working resolution.
    pub resize_target: u32,
    pub dtp: DtpConfig,
    pub query: QueryConfig,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self { resize_target: 1720, dtp: DtpConfig::default(), query: QueryConfig::default() }
    }
}

/// Every proposal of a page with its wordness and descriptor, before
/// thresholding. Kept separate so threshold grids can be evaluated without
/// re-running the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPage {
    pub page_id: String,
    pub image_path: String,
    pub width: u32,
    pub height: u32,
    pub scale: f64,
    pub proposals: Vec<Proposal>,
}

fn canonical_cmp(a: &BBox, b: &BBox) -> core::cmp::Ordering {
    let ka = [a.y0(), a.x0(), a.w, a.h];
    let kb = [b.y0(), b.x0(), b.w, b.h];
    ka.iter().zip(kb.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(core::cmp::Ordering::Equal)
}

/// Proposals, wordness and descriptors for one page, with boxes mapped
/// back to page pixel coordinates.
pub fn score_page(
    img: &GrayImage,
    page_id: &str,
    image_path: &str,
    model: &TrainedModel,
    resize_target: u32,
    dtp: &DtpConfig,
) -> Result<ScoredPage> {
    let (work, scale) = resize_longest_side(img, resize_target);
    let boxes = dtp_proposals(&work, dtp)?;
    let emb = model.embed_boxes(&work, &boxes)?;
    let (w, h) = (img.width as f64, img.height as f64);
    let proposals = boxes
        .iter()
        .zip(emb.descriptors)
        .zip(emb.wordness)
        .map(|((b, d), s)| Proposal {
            bbox: b.scaled(1.0 / scale).clamp_to(w, h),
            wordness: s,
            descriptor: d.iter().map(|&x| x as f32).collect(),
        })
        .collect();
    Ok(ScoredPage {
        page_id: page_id.into(),
        image_path: image_path.into(),
        width: img.width,
        height: img.height,
        scale,
        proposals,
    })
}

/// Applies the wordness threshold and NMS; output sorted by `(y, x, w, h)`.
pub fn filter_page(page: &ScoredPage, q: &QueryConfig) -> PageIndex {
    let kept: Vec<&Proposal> = page.proposals.iter().filter(|p| p.wordness > q.score_threshold).collect();
    let boxes: Vec<BBox> = kept.iter().map(|p| p.bbox).collect();
    let scores: Vec<f64> = kept.iter().map(|p| p.wordness).collect();
    let mut proposals: Vec<Proposal> = nms(&boxes, &scores, q.nms_overlap).into_iter().map(|i| kept[i].clone()).collect();
    proposals.sort_by(|a, b| canonical_cmp(&a.bbox, &b.bbox));
    PageIndex {
        page_id: page.page_id.clone(),
        image_path: page.image_path.clone(),
        width: page.width,
        height: page.height,
        scale: page.scale,
        n_dtp: page.proposals.len(),
        n_total: page.proposals.len(),
        proposals,
    }
}

pub fn build_page_index(
    img: &GrayImage,
    page_id: &str,
    image_path: &str,
    model: &TrainedModel,
    cfg: &IndexConfig,
) -> Result<PageIndex> {
    cfg.query.validate()?;
    let scored = score_page(img, page_id, image_path, model, cfg.resize_target, &cfg.dtp)?;
    Ok(filter_page(&scored, &cfg.query))
}

/// Indexes pages in order; a failing page yields its error without
/// stopping the batch.
pub fn build_index(pages: &[(&GrayImage, &str, &str)], model: &TrainedModel, cfg: &IndexConfig) -> Vec<Result<PageIndex>> {
    pages.iter().map(|(img, id, path)| build_page_index(img, id, path, model, cfg)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub page_id: String,
    pub bbox: BBox,
    pub similarity: f64,
}

fn cosine(desc: &[f32], q: &[f64], q_norm: f64) -> f64 {
    let mut dot = 0.0;
    let mut nd = 0.0;
    for (&d, &x) in desc.iter().zip(q) {
        let d = d as f64;
        dot += d * x;
        nd += d * d;
    }
    if nd == 0.0 || q_norm == 0.0 {
        return 0.0;
    }
    (dot / (libm::sqrt(nd) * q_norm)).clamp(-1.0, 1.0)
}

/// Ranks every proposal by cosine similarity to `query` and applies the
/// per-page zero-overlap NMS. Ties are broken by page id, then by
/// proposal order, so the result does not depend on page order.
pub fn rank_by_vector(index: &[PageIndex], query: &[f64], k: usize) -> Result<Vec<Hit>> {
    let q_norm = libm::sqrt(query.iter().map(|x| x * x).sum::<f64>());
    let mut scored: Vec<(f64, usize, usize)> = Vec::new();
    for (pi, page) in index.iter().enumerate() {
        for (i, p) in page.proposals.iter().enumerate() {
            if p.descriptor.len() != query.len() {
                return Err(Error::DimensionMismatch { expected: query.len(), actual: p.descriptor.len() });
            }
            scored.push((cosine(&p.descriptor, query, q_norm), pi, i));
        }
    }
    scored.sort_by(|a, b| {
        b.0.total_cmp(&a.0).then_with(|| index[a.1].page_id.cmp(&index[b.1].page_id)).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    });
    let mut kept_per_page: BTreeMap<usize, Vec<BBox>> = BTreeMap::new();
    let mut hits = Vec::new();
    for (sim, pi, i) in scored {
        if hits.len() >= k {
            break;
        }
        let b = index[pi].proposals[i].bbox;
        let kept = kept_per_page.entry(pi).or_default();
        if kept.iter().any(|o| iou(o, &b) > 0.0) {
            continue;
        }
        kept.push(b);
        hits.push(Hit { page_id: index[pi].page_id.clone(), bbox: b, similarity: sim });
    }
    Ok(hits)
}

/// Query-by-string: embeds the text with the model's word embedding.
pub fn query_by_string(index: &[PageIndex], query: &str, model: &TrainedModel, k: usize) -> Result<Vec<Hit>> {
    let q = model.embed_text(query)?;
    rank_by_vector(index, &q, k)
}

/// Descriptor of an arbitrary region of an indexed page, computed at the
/// page's working resolution.
pub fn embed_region(page: &PageIndex, img: &GrayImage, bbox: &BBox, model: &TrainedModel) -> Result<Vec<f64>> {
    if !bbox.is_valid() {
        return Err(Error::DegenerateBox);
    }
    if img.width != page.width || img.height != page.height {
        return Err(Error::DimensionMismatch { expected: page.width as usize, actual: img.width as usize });
    }
    let (w, h) = (page.width as f64, page.height as f64);
    if bbox.w > w || bbox.h > h {
        return Err(Error::OversizedBox);
    }
    let clipped = bbox.clamp_to(w, h);
    if !clipped.is_valid() {
        return Err(Error::DegenerateBox);
    }
    let target = libm::round(page.width.max(page.height) as f64 * page.scale) as u32;
    let (work, _) = resize_longest_side(img, target);
    let emb = model.embed_boxes(&work, &[clipped.scaled(page.scale)])?;
    Ok(emb.descriptors.into_iter().next().expect("one box"))
}

/// Query-by-example: `bbox` on page `page_id` (page pixel coordinates),
/// `img` is that page's image.
pub fn query_by_example(
    index: &[PageIndex],
    page_id: &str,
    img: &GrayImage,
    bbox: &BBox,
    model: &TrainedModel,
    k: usize,
) -> Result<Vec<Hit>> {
    let page = index.iter().find(|p| p.page_id == page_id).ok_or_else(|| Error::UnknownPage(page_id.into()))?;
    let q = embed_region(page, img, bbox, model)?;
    rank_by_vector(index, &q, k)
}
