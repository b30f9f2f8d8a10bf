//! Boxes, IoU, non-maximum suppression, box-regression targets, anchor grids
//! and proposal to ground-truth matching.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in center form, page pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub xc: f64,
    pub yc: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(xc: f64, yc: f64, w: f64, h: f64) -> Self {
        Self { xc, yc, w, h }
    }

    /// From top-left corner plus size.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { xc: x + 0.5 * w, yc: y + 0.5 * h, w, h }
    }

    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::from_xywh(x0, y0, x1 - x0, y1 - y0)
    }

    pub fn x0(&self) -> f64 {
        self.xc - 0.5 * self.w
    }

    pub fn y0(&self) -> f64 {
        self.yc - 0.5 * self.h
    }

    pub fn x1(&self) -> f64 {
        self.xc + 0.5 * self.w
    }

    pub fn y1(&self) -> f64 {
        self.yc + 0.5 * self.h
    }

    /// `(x0, y0, x1, y1)`.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (self.x0(), self.y0(), self.x1(), self.y1())
    }

    /// `[x, y, w, h]` with the top-left corner.
    pub fn xywh(&self) -> [f64; 4] {
        [self.x0(), self.y0(), self.w, self.h]
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0 && self.h > 0.0 && self.xc.is_finite() && self.yc.is_finite()
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = self.x1().min(other.x1()) - self.x0().max(other.x0());
        let ih = self.y1().min(other.y1()) - self.y0().max(other.y0());
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// Multiplies every coordinate by `s`.
    pub fn scaled(&self, s: f64) -> BBox {
        BBox { xc: self.xc * s, yc: self.yc * s, w: self.w * s, h: self.h * s }
    }

    /// Clips the box to `[0, width] x [0, height]`.
    pub fn clamp_to(&self, width: f64, height: f64) -> BBox {
        let (x0, y0, x1, y1) = self.corners();
        BBox::from_corners(x0.clamp(0.0, width), y0.clamp(0.0, height), x1.clamp(0.0, width), y1.clamp(0.0, height))
    }

    pub fn within(&self, width: f64, height: f64) -> bool {
        let (x0, y0, x1, y1) = self.corners();
        x0 >= 0.0 && y0 >= 0.0 && x1 <= width && y1 <= height
    }

    /// Rounds to the integer corner-form wire representation `[x, y, w, h]`.
    pub fn to_int_xywh(&self) -> [i64; 4] {
        let (x0, y0, x1, y1) = self.corners();
        let x = libm::round(x0) as i64;
        let y = libm::round(y0) as i64;
        [x, y, libm::round(x1) as i64 - x, libm::round(y1) as i64 - y]
    }
}

/// Intersection over union; 0 when either box is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Indices sorted by descending score, equal scores by ascending index.
pub fn score_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Greedy non-maximum suppression.
///
/// Keeps the best remaining box and drops every remaining box whose IoU with
/// it is strictly greater than `threshold`. Returns kept indices in
/// descending score order. With `threshold == 0` any overlap suppresses.
pub fn nms(boxes: &[BBox], scores: &[f64], threshold: f64) -> Vec<usize> {
    assert_eq!(boxes.len(), scores.len(), "one score per box");
    let order = score_order(scores);
    let mut keep: Vec<usize> = Vec::new();
    for &i in &order {
        if keep.iter().all(|&k| iou(&boxes[k], &boxes[i]) <= threshold) {
            keep.push(i);
        }
    }
    keep
}

/// Translation offsets normalized by the anchor size plus log scale factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionTarget {
    pub tx: f64,
    pub ty: f64,
    pub tw: f64,
    pub th: f64,
}

impl RegressionTarget {
    pub fn to_array(&self) -> [f64; 4] {
        [self.tx, self.ty, self.tw, self.th]
    }
}

pub fn encode_box(anchor: &BBox, gt: &BBox) -> RegressionTarget {
    RegressionTarget {
        tx: (gt.xc - anchor.xc) / anchor.w,
        ty: (gt.yc - anchor.yc) / anchor.h,
        tw: libm::log(gt.w / anchor.w),
        th: libm::log(gt.h / anchor.h),
    }
}

pub fn decode_box(anchor: &BBox, t: &RegressionTarget) -> BBox {
    BBox {
        xc: anchor.xc + t.tx * anchor.w,
        yc: anchor.yc + t.ty * anchor.h,
        w: anchor.w * libm::exp(t.tw),
        h: anchor.h * libm::exp(t.th),
    }
}

/// [`decode_box`] followed by clipping to the image.
pub fn decode_box_clamped(anchor: &BBox, t: &RegressionTarget, width: f64, height: f64) -> BBox {
    decode_box(anchor, t).clamp_to(width, height)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnchorConfig {
    pub heights: Vec<f64>,
    pub widths: Vec<f64>,
    pub stride: u32,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        Self {
            heights: alloc::vec![20.0, 40.0, 60.0],
            widths: alloc::vec![30.0, 90.0, 150.0, 210.0, 300.0],
            stride: 8,
        }
    }
}

impl AnchorConfig {
    pub fn per_position(&self) -> usize {
        self.heights.len() * self.widths.len()
    }
}

/// Anchors for every grid cell, cell-major, then height-major sizes. Cell
/// centers sit at `stride * (i + 0.5)`.
pub fn anchor_grid(image_w: u32, image_h: u32, cfg: &AnchorConfig) -> Vec<BBox> {
    let stride = cfg.stride.max(1);
    let (nx, ny) = (image_w / stride, image_h / stride);
    let s = stride as f64;
    let mut out = Vec::with_capacity(nx as usize * ny as usize * cfg.per_position());
    for gy in 0..ny {
        let yc = s * (gy as f64 + 0.5);
        for gx in 0..nx {
            let xc = s * (gx as f64 + 0.5);
            for &h in &cfg.heights {
                for &w in &cfg.widths {
                    out.push(BBox::new(xc, yc, w, h));
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    pub pos_iou: f64,
    pub neg_iou: f64,
    pub batch: usize,
    pub pos_per_batch: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { pos_iou: 0.75, neg_iou: 0.4, batch: 256, pos_per_batch: 128 }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 <= self.neg_iou
            && self.neg_iou < self.pos_iou
            && self.pos_iou <= 1.0
            && self.pos_per_batch <= self.batch;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("match thresholds or batch sizes out of range".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatchLabel {
    Positive { gt: usize, iou: f64 },
    Negative,
    Ignored,
}

/// Labels every proposal by its best ground-truth overlap. Ties between
/// ground truths go to the lower index.
pub fn label_proposals(proposals: &[BBox], gts: &[BBox], cfg: &MatchConfig) -> Vec<MatchLabel> {
    proposals
        .iter()
        .map(|p| {
            let mut best = (0.0, usize::MAX);
            for (g, gt) in gts.iter().enumerate() {
                let o = iou(p, gt);
                if best.1 == usize::MAX || o > best.0 {
                    best = (o, g);
                }
            }
            if best.1 != usize::MAX && best.0 > cfg.pos_iou {
                MatchLabel::Positive { gt: best.1, iou: best.0 }
            } else if best.0 < cfg.neg_iou {
                MatchLabel::Negative
            } else {
                MatchLabel::Ignored
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositiveMatch {
    pub proposal: usize,
    pub gt: usize,
    pub target: RegressionTarget,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchSample {
    pub positives: Vec<PositiveMatch>,
    pub negatives: Vec<usize>,
}

/// Labels proposals and samples a training batch: up to `pos_per_batch`
/// positives, the rest of `batch` filled with negatives. Both draws are
/// without replacement and depend only on `seed`.
pub fn match_and_sample(proposals: &[BBox], gts: &[BBox], cfg: &MatchConfig, seed: u64) -> Result<MatchSample> {
    cfg.validate()?;
    let labels = label_proposals(proposals, gts, cfg);
    let mut pos: Vec<(usize, usize)> = Vec::new();
    let mut neg: Vec<usize> = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        match *l {
            MatchLabel::Positive { gt, .. } => pos.push((i, gt)),
            MatchLabel::Negative => neg.push(i),
            MatchLabel::Ignored => {}
        }
    }
    if pos.is_empty() {
        return Err(Error::NoPositives);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    pos.truncate(cfg.pos_per_batch);
    neg.truncate(cfg.batch - pos.len());
    let positives = pos
        .into_iter()
        .map(|(p, g)| PositiveMatch { proposal: p, gt: g, target: encode_box(&proposals[p], &gts[g]) })
        .collect();
    Ok(MatchSample { positives, negatives: neg })
}
