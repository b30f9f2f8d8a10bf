//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wordspot_core::geometry::{iou, MatchConfig};
use wordspot_core::image::{BinaryImage, GrayImage, PixelRect};
use wordspot_core::BBox;

pub mod gradcheck;

pub const SYMBOLS: &str = "0123456789abcdefghijklmnopqrstuvwxyz";

pub fn random_word(rng: &mut impl Rng, max_len: usize) -> String {
    let chars: Vec<char> = SYMBOLS.chars().collect();
    let len = rng.random_range(1..=max_len);
    (0..len).map(|_| chars[rng.random_range(0..chars.len())]).collect()
}

/// PHOC by walking every (level, region, character) triple and comparing
/// interval lengths as exact fractions with denominator `m * level`.
pub fn phoc_oracle(word: &str, levels: &[usize]) -> Vec<f64> {
    let k = SYMBOLS.len();
    let chars: Vec<usize> = word.chars().map(|c| SYMBOLS.find(c).unwrap()).collect();
    let m = chars.len() as i64;
    let total: usize = levels.iter().sum();
    let mut out = vec![0.0; total * k];
    let mut offset = 0;
    for &l in levels {
        let li = l as i64;
        for r in 0..li {
            for (pos, &c) in chars.iter().enumerate() {
                let p = pos as i64;
                let start = (p * li).max(r * m);
                let end = ((p + 1) * li).min((r + 1) * m);
                let overlap = (end - start).max(0);
                // overlap / (m l) >= (1/m) / 2
                if overlap * 2 >= li {
                    out[(offset + r as usize) * k + c] = 1.0;
                }
            }
        }
        offset += l;
    }
    out
}

/// DCToW by summing the DCT-II of the full one-hot matrix, zeros included.
pub fn dctow_oracle(word: &str, r: usize) -> Vec<f64> {
    let k = SYMBOLS.len();
    let chars: Vec<usize> = word.chars().map(|c| SYMBOLS.find(c).unwrap()).collect();
    let m = chars.len();
    let mut onehot = vec![vec![0.0f64; k]; m];
    for (i, &c) in chars.iter().enumerate() {
        onehot[i][c] = 1.0;
    }
    let mut out = vec![0.0; r * k];
    for f in 0..r.min(m) {
        let alpha = if f == 0 { (1.0 / m as f64).sqrt() } else { (2.0 / m as f64).sqrt() };
        for ch in 0..k {
            let mut s = 0.0;
            for n in 0..m {
                s += onehot[n][ch] * (std::f64::consts::PI / m as f64 * (n as f64 + 0.5) * f as f64).cos();
            }
            out[f * k + ch] = alpha * s;
        }
    }
    out
}

/// Greedy NMS by repeated linear scans for the best remaining box.
pub fn nms_oracle(boxes: &[BBox], scores: &[f64], t: f64) -> Vec<usize> {
    let mut alive = vec![true; boxes.len()];
    let mut keep = Vec::new();
    loop {
        let mut best: Option<usize> = None;
        for i in 0..boxes.len() {
            if alive[i] && best.is_none_or(|b| scores[i] > scores[b]) {
                best = Some(i);
            }
        }
        let Some(b) = best else { break };
        keep.push(b);
        alive[b] = false;
        for j in 0..boxes.len() {
            if alive[j] && iou(&boxes[b], &boxes[j]) > t {
                alive[j] = false;
            }
        }
    }
    keep
}

/// Positive (proposal, gt) pairs and negative proposals by double loop.
pub fn match_oracle(proposals: &[BBox], gts: &[BBox], cfg: &MatchConfig) -> (Vec<(usize, usize)>, Vec<usize>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, p) in proposals.iter().enumerate() {
        let mut best = -1.0;
        let mut arg = 0;
        for (g, gt) in gts.iter().enumerate() {
            let o = iou(p, gt);
            if o > best {
                best = o;
                arg = g;
            }
        }
        if best > cfg.pos_iou {
            pos.push((i, arg));
        } else if best < cfg.neg_iou {
            neg.push(i);
        }
    }
    (pos, neg)
}

/// 8-connected components by recursive-free stack flood fill; returns
/// `(rect, area)` sorted like the library.
pub fn components_oracle(img: &BinaryImage) -> Vec<(PixelRect, usize)> {
    let (w, h) = (img.width as i64, img.height as i64);
    let mut label = vec![0usize; (w * h) as usize];
    let mut out = Vec::new();
    let mut next = 1;
    for y in 0..h {
        for x in 0..w {
            if !img.get(x as u32, y as u32) || label[(y * w + x) as usize] != 0 {
                continue;
            }
            let mut stack = vec![(x, y)];
            label[(y * w + x) as usize] = next;
            let (mut x0, mut y0, mut x1, mut y1, mut area) = (x, y, x, y, 0);
            while let Some((px, py)) = stack.pop() {
                area += 1;
                x0 = x0.min(px);
                y0 = y0.min(py);
                x1 = x1.max(px);
                y1 = y1.max(py);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (px + dx, py + dy);
                        if nx < 0 || ny < 0 || nx >= w || ny >= h {
                            continue;
                        }
                        let q = (ny * w + nx) as usize;
                        if img.get(nx as u32, ny as u32) && label[q] == 0 {
                            label[q] = next;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
            next += 1;
            out.push((PixelRect::new(x0 as u32, y0 as u32, (x1 - x0 + 1) as u32, (y1 - y0 + 1) as u32), area));
        }
    }
    out.sort_by_key(|(r, _)| (r.y, r.x, r.w, r.h));
    out
}

/// Closing on the infinite plane straight from the definition: `p` is set
/// iff every window position covering `p` contains a foreground pixel.
pub fn closing_oracle(img: &BinaryImage, se_w: u32, se_h: u32) -> BinaryImage {
    let (rx, ry) = ((se_w / 2) as i64, (se_h / 2) as i64);
    let (w, h) = (img.width as i64, img.height as i64);
    let fg = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && img.get(x as u32, y as u32);
    let dilated = |x: i64, y: i64| {
        for dy in -ry..=ry {
            for dx in -rx..=rx {
                if fg(x + dx, y + dy) {
                    return true;
                }
            }
        }
        false
    };
    let mut out = BinaryImage::new(img.width, img.height);
    for y in 0..h {
        for x in 0..w {
            let mut all = true;
            'outer: for dy in -ry..=ry {
                for dx in -rx..=rx {
                    if !dilated(x + dx, y + dy) {
                        all = false;
                        break 'outer;
                    }
                }
            }
            out.set(x as u32, y as u32, all);
        }
    }
    out
}

/// Windowed min (`dark = true`) or max with replicated borders.
pub fn rank_oracle(img: &GrayImage, se_w: u32, se_h: u32, dark: bool) -> GrayImage {
    let (rx, ry) = ((se_w / 2) as i64, (se_h / 2) as i64);
    let (w, h) = (img.width as i64, img.height as i64);
    GrayImage::from_fn(img.width, img.height, |x, y| {
        let mut v = if dark { 255 } else { 0 };
        for dy in -ry..=ry {
            for dx in -rx..=rx {
                let sx = (x as i64 + dx).clamp(0, w - 1) as u32;
                let sy = (y as i64 + dy).clamp(0, h - 1) as u32;
                let p = img.get(sx, sy);
                v = if dark { v.min(p) } else { v.max(p) };
            }
        }
        v
    })
}

pub fn random_box(rng: &mut impl Rng, extent: f64) -> BBox {
    let w = rng.random_range(1.0..extent / 3.0);
    let h = rng.random_range(1.0..extent / 3.0);
    let x = rng.random_range(0.0..extent - w);
    let y = rng.random_range(0.0..extent - h);
    BBox::from_xywh(x, y, w, h)
}

/// Boxes on an integer grid, so equal overlaps and duplicates do occur.
pub fn random_grid_box(rng: &mut impl Rng, extent: i32) -> BBox {
    let w = rng.random_range(1..extent / 3) as f64;
    let h = rng.random_range(1..extent / 3) as f64;
    let x = rng.random_range(0..extent - extent / 3) as f64;
    let y = rng.random_range(0..extent - extent / 3) as f64;
    BBox::from_xywh(x, y, w, h)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_bitmap(rng: &mut impl Rng, w: u32, h: u32, density: f64) -> BinaryImage {
    let mut b = BinaryImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            b.set(x, y, rng.random_bool(density));
        }
    }
    b
}

/// Central finite difference of `f` at `x`, coordinate by coordinate.
pub fn numeric_grad(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = xp[i];
            xp[i] = orig + h;
            let fp = f(&xp);
            xp[i] = orig - h;
            let fm = f(&xp);
            xp[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Largest elementwise `|a - n| / max(|a|, |n|, floor)`.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
