//! Grayscale raster primitives.
//!
//! Ink is dark: intensity 0 is black ink, 255 is white paper. Binary images
//! mark ink pixels as foreground. Every bilinear operation uses the
//! half-pixel convention: pixel `i` covers `[i, i + 1)` and its sample sits at
//! `i + 0.5`.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    /// Row-major intensities, `width * height` long.
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, fill: u8) -> Self {
        Self { width, height, pixels: vec![fill; width as usize * height as usize] }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width as usize * height as usize {
            return Err(Error::DimensionMismatch { expected: width as usize * height as usize, actual: pixels.len() });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self { width, height, pixels }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: u8) {
        self.pixels[y as usize * self.width as usize + x as usize] = v;
    }

    pub fn mean(&self) -> f64 {
        if self.pixels.is_empty() {
            return 0.0;
        }
        self.pixels.iter().map(|&p| p as u64).sum::<u64>() as f64 / self.pixels.len() as f64
    }

    /// Lower median intensity.
    pub fn median(&self) -> u8 {
        median_of_histogram(&self.histogram())
    }

    pub fn histogram(&self) -> [u64; 256] {
        let mut hist = [0u64; 256];
        for &p in &self.pixels {
            hist[p as usize] += 1;
        }
        hist
    }

    pub fn crop(&self, r: PixelRect) -> GrayImage {
        let r = r.clip(self.width, self.height);
        GrayImage::from_fn(r.w, r.h, |x, y| self.get(r.x + x, r.y + y))
    }

    /// Copies `src` with its top-left corner at `(x, y)`, clipped to `self`.
    pub fn paste(&mut self, src: &GrayImage, x: u32, y: u32) {
        self.blend(src, x, y, |_, s| s);
    }

    /// Like [`paste`](Self::paste) but keeps the darker of the two pixels.
    pub fn paste_darken(&mut self, src: &GrayImage, x: u32, y: u32) {
        self.blend(src, x, y, |d, s| d.min(s));
    }

    fn blend(&mut self, src: &GrayImage, x: u32, y: u32, f: impl Fn(u8, u8) -> u8) {
        for sy in 0..src.height {
            let dy = y + sy;
            if dy >= self.height {
                break;
            }
            for sx in 0..src.width {
                let dx = x + sx;
                if dx >= self.width {
                    break;
                }
                let v = f(self.get(dx, dy), src.get(sx, sy));
                self.set(dx, dy, v);
            }
        }
    }

    /// Bilinear sample at continuous pixel-index coordinates, clamped to the
    /// image.
    pub fn sample_clamped(&self, x: f64, y: f64) -> f64 {
        let xm = (self.width - 1) as f64;
        let ym = (self.height - 1) as f64;
        let x = x.clamp(0.0, xm);
        let y = y.clamp(0.0, ym);
        let x0 = libm::floor(x);
        let y0 = libm::floor(y);
        let fx = x - x0;
        let fy = y - y0;
        let (x0, y0) = (x0 as u32, y0 as u32);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let top = lerp(self.get(x0, y0) as f64, self.get(x1, y0) as f64, fx);
        let bottom = lerp(self.get(x0, y1) as f64, self.get(x1, y1) as f64, fx);
        lerp(top, bottom, fy)
    }
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else {
        a + (b - a) * t
    }
}

#[inline]
fn to_u8(v: f64) -> u8 {
    libm::round(v).clamp(0.0, 255.0) as u8
}

pub(crate) fn median_of_histogram(hist: &[u64; 256]) -> u8 {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return 0;
    }
    let half = total.div_ceil(2);
    let mut acc = 0;
    for (v, &n) in hist.iter().enumerate() {
        acc += n;
        if acc >= half {
            return v as u8;
        }
    }
    255
}

/// Integer pixel rectangle covering pixels `x..x+w`, `y..y+h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl PixelRect {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn to_bbox(&self) -> BBox {
        BBox::from_xywh(self.x as f64, self.y as f64, self.w as f64, self.h as f64)
    }

    pub fn clip(&self, width: u32, height: u32) -> PixelRect {
        let x = self.x.min(width);
        let y = self.y.min(height);
        PixelRect { x, y, w: self.w.min(width - x), h: self.h.min(height - y) }
    }

    /// Smallest pixel rectangle containing `b`, clipped to the image.
    pub fn enclosing(b: &BBox, width: u32, height: u32) -> PixelRect {
        let (x0, y0, x1, y1) = b.clamp_to(width as f64, height as f64).corners();
        let (x0, y0) = (libm::floor(x0) as u32, libm::floor(y0) as u32);
        let (x1, y1) = (libm::ceil(x1) as u32, libm::ceil(y1) as u32);
        PixelRect { x: x0, y: y0, w: x1.saturating_sub(x0), h: y1.saturating_sub(y0) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    pub width: u32,
    pub height: u32,
    /// Row-major, `true` = foreground (ink).
    pub bits: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, bits: vec![false; width as usize * height as usize] }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Rectangular structuring element with odd sides, anchored at its center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StructuringElement {
    pub w: u32,
    pub h: u32,
}

impl StructuringElement {
    pub fn new(w: u32, h: u32) -> Result<Self> {
        let se = Self { w, h };
        se.validate()?;
        Ok(se)
    }

    pub fn validate(&self) -> Result<()> {
        if self.w == 0 || self.h == 0 || self.w.is_multiple_of(2) || self.h.is_multiple_of(2) {
            return Err(Error::InvalidConfig(alloc::format!(
                "structuring element {}x{} must have odd positive sides",
                self.w,
                self.h
            )));
        }
        Ok(())
    }

    fn radii(&self) -> (u32, u32) {
        (self.w / 2, self.h / 2)
    }
}

/// Bilinear resize to exactly `new_w x new_h`.
pub fn resize(img: &GrayImage, new_w: u32, new_h: u32) -> GrayImage {
    if new_w == img.width && new_h == img.height {
        return img.clone();
    }
    let sx = img.width as f64 / new_w as f64;
    let sy = img.height as f64 / new_h as f64;
    GrayImage::from_fn(new_w, new_h, |x, y| {
        let fx = (x as f64 + 0.5) * sx - 0.5;
        let fy = (y as f64 + 0.5) * sy - 0.5;
        to_u8(img.sample_clamped(fx, fy))
    })
}

/// Resizes so the longest side equals `target`, keeping the aspect ratio.
/// Returns the image and the scale mapping input coordinates to output.
pub fn resize_longest_side(img: &GrayImage, target: u32) -> (GrayImage, f64) {
    let longest = img.width.max(img.height);
    if longest == target || longest == 0 {
        return (img.clone(), 1.0);
    }
    let scale = target as f64 / longest as f64;
    let dim = |d: u32| {
        if d == longest {
            target
        } else {
            (libm::round(d as f64 * scale) as u32).max(1)
        }
    };
    (resize(img, dim(img.width), dim(img.height)), scale)
}

/// Foreground where intensity is strictly below `t`.
pub fn threshold(img: &GrayImage, t: f64) -> BinaryImage {
    BinaryImage { width: img.width, height: img.height, bits: img.pixels.iter().map(|&p| (p as f64) < t).collect() }
}

/// Summed-area table with one row and column of zero padding.
struct Integral {
    stride: usize,
    sums: Vec<u32>,
}

impl Integral {
    fn new(width: usize, height: usize, value: impl Fn(usize, usize) -> bool) -> Self {
        let stride = width + 1;
        let mut sums = vec![0u32; stride * (height + 1)];
        for y in 0..height {
            let mut row = 0u32;
            for x in 0..width {
                row += value(x, y) as u32;
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self { stride, sums }
    }

    /// Count over the half-open rectangle `[x0, x1) x [y0, y1)`.
    #[inline]
    fn count(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> u32 {
        let s = self.stride;
        self.sums[y1 * s + x1] + self.sums[y0 * s + x0] - self.sums[y0 * s + x1] - self.sums[y1 * s + x0]
    }
}

/// Morphological closing (dilation then erosion) with a rectangle.
///
/// The image is treated as embedded in an infinite background plane, so the
/// result is the exact closing: extensive and idempotent, also at borders.
pub fn binary_close(img: &BinaryImage, se: StructuringElement) -> BinaryImage {
    let (w, h) = (img.width as usize, img.height as usize);
    let (rx, ry) = se.radii();
    let (rx, ry) = (rx as usize, ry as usize);
    // dilation on the image extended by the element radius on every side
    let (ew, eh) = (w + 2 * rx, h + 2 * ry);
    let src = Integral::new(w, h, |x, y| img.bits[y * w + x]);
    let mut dilated = vec![false; ew * eh];
    for ey in 0..eh {
        // window rows in image coordinates: [ey - 2ry, ey] clipped
        let y0 = ey.saturating_sub(2 * ry).min(h);
        let y1 = (ey + 1).min(h);
        if y0 >= y1 {
            continue;
        }
        for ex in 0..ew {
            let x0 = ex.saturating_sub(2 * rx).min(w);
            let x1 = (ex + 1).min(w);
            if x0 < x1 && src.count(x0, y0, x1, y1) > 0 {
                dilated[ey * ew + ex] = true;
            }
        }
    }
    let dil = Integral::new(ew, eh, |x, y| dilated[y * ew + x]);
    let full = se.w * se.h;
    let mut out = BinaryImage::new(img.width, img.height);
    for y in 0..h {
        for x in 0..w {
            // image pixel (x, y) sits at (x + rx, y + ry) in the extended frame
            out.bits[y * w + x] = dil.count(x, y, x + 2 * rx + 1, y + 2 * ry + 1) == full;
        }
    }
    out
}

fn rank_filter(img: &GrayImage, se: StructuringElement, pick: fn(u8, u8) -> u8) -> GrayImage {
    let (rx, ry) = se.radii();
    let (w, h) = (img.width as i64, img.height as i64);
    if w == 0 || h == 0 {
        return img.clone();
    }
    let clamp = |v: i64, hi: i64| v.clamp(0, hi - 1) as u32;
    let horiz = GrayImage::from_fn(img.width, img.height, |x, y| {
        let mut acc = img.get(x, y);
        for dx in -(rx as i64)..=(rx as i64) {
            acc = pick(acc, img.get(clamp(x as i64 + dx, w), y));
        }
        acc
    });
    GrayImage::from_fn(img.width, img.height, |x, y| {
        let mut acc = horiz.get(x, y);
        for dy in -(ry as i64)..=(ry as i64) {
            acc = pick(acc, horiz.get(x, clamp(y as i64 + dy, h)));
        }
        acc
    })
}

/// Grayscale dilation of dark ink: local minimum over the element window,
/// replicate border.
pub fn gray_dilate(img: &GrayImage, se: StructuringElement) -> GrayImage {
    rank_filter(img, se, u8::min)
}

/// Grayscale erosion of dark ink: local maximum, replicate border.
pub fn gray_erode(img: &GrayImage, se: StructuringElement) -> GrayImage {
    rank_filter(img, se, u8::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Component {
    pub rect: PixelRect,
    /// Foreground pixel count.
    pub area: usize,
}

/// 8-connected foreground components with tight bounding boxes, sorted by
/// `(top, left, width, height)`.
pub fn connected_components(img: &BinaryImage) -> Vec<Component> {
    let (w, h) = (img.width as usize, img.height as usize);
    let mut seen = vec![false; w * h];
    let mut queue = VecDeque::new();
    let mut out = Vec::new();
    for start in 0..w * h {
        if !img.bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let mut area = 0;
        while let Some(p) = queue.pop_front() {
            let (px, py) = (p % w, p / w);
            area += 1;
            x0 = x0.min(px);
            x1 = x1.max(px);
            y0 = y0.min(py);
            y1 = y1.max(py);
            for ny in py.saturating_sub(1)..=(py + 1).min(h - 1) {
                for nx in px.saturating_sub(1)..=(px + 1).min(w - 1) {
                    let q = ny * w + nx;
                    if img.bits[q] && !seen[q] {
                        seen[q] = true;
                        queue.push_back(q);
                    }
                }
            }
        }
        out.push(Component {
            rect: PixelRect::new(x0 as u32, y0 as u32, (x1 - x0 + 1) as u32, (y1 - y0 + 1) as u32),
            area,
        });
    }
    out.sort_by_key(|c| (c.rect.y, c.rect.x, c.rect.w, c.rect.h));
    out
}

/// Resamples `bbox` to an `out_h x out_w` grid of intensities in `[0, 1]`.
/// Sample points outside the image clamp to the nearest pixel.
pub fn bilinear_roi_resize(img: &GrayImage, bbox: &BBox, out_w: usize, out_h: usize) -> Result<Vec<f64>> {
    if !bbox.is_valid() {
        return Err(Error::DegenerateBox);
    }
    if img.width == 0 || img.height == 0 {
        return Err(Error::DegenerateBox);
    }
    let (x0, y0) = (bbox.x0(), bbox.y0());
    let sx = bbox.w / out_w as f64;
    let sy = bbox.h / out_h as f64;
    let mut out = Vec::with_capacity(out_w * out_h);
    for i in 0..out_h {
        let fy = y0 + (i as f64 + 0.5) * sy - 0.5;
        for j in 0..out_w {
            let fx = x0 + (j as f64 + 0.5) * sx - 0.5;
            out.push(img.sample_clamped(fx, fy) / 255.0);
        }
    }
    Ok(out)
}

/// Horizontal shear about the image center by `angle_deg` degrees. Samples
/// falling outside the source are filled with the median intensity.
pub fn shear(img: &GrayImage, angle_deg: f64) -> GrayImage {
    if img.width == 0 || img.height == 0 {
        return img.clone();
    }
    let slope = libm::tan(angle_deg.to_radians());
    let fill = img.median() as f64;
    let cy = img.height as f64 / 2.0;
    let w = img.width as i64;
    let at = |x: i64, y: u32| if x < 0 || x >= w { fill } else { img.get(x as u32, y) as f64 };
    GrayImage::from_fn(img.width, img.height, |x, y| {
        let offset = slope * (y as f64 + 0.5 - cy);
        let fx = x as f64 - offset;
        let x0 = libm::floor(fx);
        let t = fx - x0;
        let x0 = x0 as i64;
        to_u8(lerp(at(x0, y), at(x0 + 1, y), t))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bin(w: u32, h: u32, on: &[(u32, u32)]) -> BinaryImage {
        let mut b = BinaryImage::new(w, h);
        for &(x, y) in on {
            b.set(x, y, true);
        }
        b
    }

    #[test]
    fn resize_longest_examples() {
        let img = GrayImage::new(3440, 1720, 77);
        let (out, s) = resize_longest_side(&img, 1720);
        assert_eq!((out.width, out.height, s), (1720, 860, 0.5));
        assert!(out.pixels.iter().all(|&p| p == 77));
        let (same, s) = resize_longest_side(&out, 1720);
        assert_eq!(same, out);
        assert_eq!(s, 1.0);
    }

    #[test]
    fn threshold_examples() {
        let img = GrayImage::from_fn(8, 8, |x, y| if (x + y) % 2 == 0 { 0 } else { 255 });
        assert_eq!(threshold(&img, 0.0).count(), 0);
        assert_eq!(threshold(&img, 256.0).count(), 64);
        let t = threshold(&img, img.mean());
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(t.get(x, y), img.get(x, y) == 0);
            }
        }
    }

    #[test]
    fn closing_fills_gap() {
        let b = bin(12, 3, &[(3, 1), (6, 1)]);
        let c = binary_close(&b, StructuringElement::new(5, 1).unwrap());
        for x in 3..=6 {
            assert!(c.get(x, 1));
        }
        assert_eq!(c.count(), 4);
        assert_eq!(binary_close(&c, StructuringElement::new(5, 1).unwrap()), c);
        let empty = BinaryImage::new(5, 5);
        assert_eq!(binary_close(&empty, StructuringElement::new(3, 3).unwrap()), empty);
    }

    #[test]
    fn closing_is_extensive_at_border() {
        let b = bin(6, 6, &[(0, 0), (5, 5), (0, 5)]);
        let c = binary_close(&b, StructuringElement::new(3, 3).unwrap());
        assert_eq!(c, b);
    }

    #[test]
    fn even_element_rejected() {
        assert!(StructuringElement::new(4, 1).is_err());
        assert!(StructuringElement::new(1, 0).is_err());
    }

    #[test]
    fn gray_morphology() {
        let flat = GrayImage::new(9, 9, 120);
        let se = StructuringElement::new(3, 3).unwrap();
        assert_eq!(gray_dilate(&flat, se), flat);
        assert_eq!(gray_erode(&flat, se), flat);
        let mut dot = GrayImage::new(9, 9, 255);
        dot.set(4, 4, 0);
        let d = gray_dilate(&dot, se);
        for y in 0..9 {
            for x in 0..9 {
                let inside = (3..=5).contains(&x) && (3..=5).contains(&y);
                assert_eq!(d.get(x, y) == 0, inside);
            }
        }
        assert_eq!(gray_erode(&d, se), dot);
    }

    #[test]
    fn gray_duality() {
        let img = GrayImage::from_fn(13, 7, |x, y| ((x * 37 + y * 91) % 256) as u8);
        let inv = |i: &GrayImage| GrayImage { pixels: i.pixels.iter().map(|p| 255 - p).collect(), ..i.clone() };
        let se = StructuringElement::new(5, 3).unwrap();
        assert_eq!(gray_dilate(&img, se), inv(&gray_erode(&inv(&img), se)));
    }

    #[test]
    fn components_examples() {
        let mut rect = BinaryImage::new(20, 10);
        for y in 2..6 {
            for x in 3..11 {
                rect.set(x, y, true);
            }
        }
        let c = connected_components(&rect);
        assert_eq!(c, alloc::vec![Component { rect: PixelRect::new(3, 2, 8, 4), area: 32 }]);
        let diag = bin(4, 4, &[(1, 1), (2, 2)]);
        assert_eq!(connected_components(&diag).len(), 1);
        assert!(connected_components(&BinaryImage::new(3, 3)).is_empty());
    }

    #[test]
    fn roi_identity_and_constant() {
        let img = GrayImage::from_fn(40, 30, |x, y| ((x * 5 + y * 3) % 256) as u8);
        let b = BBox::from_xywh(7.0, 4.0, 20.0, 8.0);
        let out = bilinear_roi_resize(&img, &b, 20, 8).unwrap();
        for i in 0..8 {
            for j in 0..20 {
                let expect = img.get(7 + j as u32, 4 + i as u32) as f64 / 255.0;
                assert!((out[i * 20 + j] - expect).abs() < 1e-12);
            }
        }
        let flat = GrayImage::new(40, 30, 51);
        let out = bilinear_roi_resize(&flat, &BBox::from_xywh(3.3, 2.1, 17.7, 9.2), 20, 8).unwrap();
        assert!(out.iter().all(|&v| (v - 0.2).abs() < 1e-12));
        let bad = BBox::from_xywh(1.0, 1.0, 0.0, 5.0);
        assert_eq!(bilinear_roi_resize(&flat, &bad, 20, 8), Err(Error::DegenerateBox));
    }

    #[test]
    fn roi_preserves_ramp() {
        let img = GrayImage::from_fn(100, 20, |x, _| (2 * x) as u8);
        let b = BBox::from_xywh(10.0, 5.0, 60.0, 8.0);
        let out = bilinear_roi_resize(&img, &b, 20, 8).unwrap();
        for j in 0..20 {
            let fx = 10.0 + (j as f64 + 0.5) * 3.0 - 0.5;
            assert!((out[j] * 255.0 - 2.0 * fx).abs() < 1e-9);
        }
    }

    #[test]
    fn shear_contract() {
        let img = GrayImage::from_fn(31, 17, |x, y| ((x * 7 + y * 13) % 256) as u8);
        assert_eq!(shear(&img, 0.0), img);
        let s = shear(&img, 10.0);
        assert_eq!((s.width, s.height), (31, 17));
    }

    #[test]
    fn shear_round_trip_on_smooth_image() {
        let img = GrayImage::from_fn(120, 40, |x, y| (60.0 + 40.0 * libm::sin(x as f64 / 9.0) + y as f64) as u8);
        let angle = 8.0;
        let back = shear(&shear(&img, angle), -angle);
        // only pixels whose displacement stays inside the frame
        let margin = (libm::tan(angle.to_radians()) * 20.0) as u32 + 2;
        let mut se = 0.0;
        let mut n = 0.0;
        for y in 0..40 {
            for x in margin..120 - margin {
                let d = img.get(x, y) as f64 - back.get(x, y) as f64;
                se += d * d;
                n += 1.0;
            }
        }
        let psnr = 10.0 * libm::log10(255.0 * 255.0 / (se / n).max(1e-12));
        assert!(psnr > 30.0, "psnr {psnr}");
    }
}
