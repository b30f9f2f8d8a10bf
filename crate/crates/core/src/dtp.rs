//! Dilated text proposals: multi-threshold binarization, rectangular
//! closing and connected components.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::image::{binary_close, connected_components, threshold, GrayImage, StructuringElement};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DtpConfig {
    /// Binarization thresholds as multiples of the page mean.
    pub mean_multiples: Vec<f64>,
    pub kernels: Vec<StructuringElement>,
    /// Minimum bounding-box area in px².
    pub min_area: u64,
    pub pad: f64,
    pub dedup_iou: f64,
}

impl Default for DtpConfig {
    fn default() -> Self {
        let mut kernels = Vec::new();
        for w in [1, 3, 5, 7, 9, 11, 15, 21] {
            for h in [1, 3, 5] {
                kernels.push(StructuringElement { w, h });
            }
        }
        Self { mean_multiples: alloc::vec![0.7, 0.8, 0.9], kernels, min_area: 24, pad: 0.0, dedup_iou: 0.95 }
    }
}

impl DtpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mean_multiples.is_empty() || self.mean_multiples.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::InvalidConfig("mean_multiples must be non-empty and positive".into()));
        }
        if self.kernels.is_empty() {
            return Err(Error::InvalidConfig("kernels must be non-empty".into()));
        }
        if !(self.pad >= 0.0) {
            return Err(Error::InvalidConfig("pad must be non-negative".into()));
        }
        self.kernels.iter().try_for_each(StructuringElement::validate)
    }
}

/// Grows every side of `b` by `pad` pixels and clips to the page.
pub fn pad_box(b: &BBox, pad: f64, width: f64, height: f64) -> BBox {
    if pad == 0.0 {
        return *b;
    }
    let (x0, y0, x1, y1) = b.corners();
    BBox::from_corners(x0 - pad, y0 - pad, x1 + pad, y1 + pad).clamp_to(width, height)
}

fn canonical_key(b: &BBox) -> [f64; 4] {
    let [x, y, w, h] = b.xywh();
    [y, x, w, h]
}

fn sort_canonical(boxes: &mut [BBox]) {
    boxes.sort_by(|a, b| {
        let (ka, kb) = (canonical_key(a), canonical_key(b));
        ka.iter().zip(kb.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(core::cmp::Ordering::Equal)
    });
}

/// Greedy near-duplicate removal in canonical `(y, x, w, h)` order: a box is
/// kept unless its IoU with an already kept box exceeds `max_iou`.
pub fn dedup_boxes(mut boxes: Vec<BBox>, max_iou: f64) -> Vec<BBox> {
    sort_canonical(&mut boxes);
    boxes.dedup();
    let mut kept: Vec<BBox> = Vec::with_capacity(boxes.len());
    for b in boxes {
        // kept is sorted by top edge; only boxes starting above b's bottom can overlap
        if kept.iter().rev().filter(|k| k.y1() > b.y0()).all(|k| iou(k, &b) <= max_iou) {
            kept.push(b);
        }
    }
    kept
}

/// Runs the full proposal generator on a page.
pub fn dtp_proposals(img: &GrayImage, cfg: &DtpConfig) -> Result<Vec<BBox>> {
    cfg.validate()?;
    let (w, h) = (img.width as f64, img.height as f64);
    let mean = img.mean();
    let mut boxes = Vec::new();
    for &m in &cfg.mean_multiples {
        let bin = threshold(img, m * mean);
        if bin.count() == 0 {
            continue;
        }
        for &se in &cfg.kernels {
            let closed = binary_close(&bin, se);
            for c in connected_components(&closed) {
                if c.rect.area() >= cfg.min_area {
                    boxes.push(pad_box(&c.rect.to_bbox(), cfg.pad, w, h));
                }
            }
        }
    }
    Ok(dedup_boxes(boxes, cfg.dedup_iou))
}
