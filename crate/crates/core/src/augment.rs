//! Training-data generation: in-place and full-page augmentation, and a
//! procedural glyph corpus used for end-to-end tests without any dataset.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::image::{gray_dilate, gray_erode, resize, shear, GrayImage, PixelRect, StructuringElement};
use crate::text::Alphabet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MorphOp {
    Dilate,
    Erode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorphElement {
    pub op: MorphOp,
    /// Odd side of the square structuring element; 1 is the identity.
    pub size: u32,
}

impl MorphElement {
    pub fn apply(&self, img: &GrayImage) -> Result<GrayImage> {
        let se = StructuringElement::new(self.size, self.size)?;
        if self.size == 1 {
            return Ok(img.clone());
        }
        Ok(match self.op {
            MorphOp::Dilate => gray_dilate(img, se),
            MorphOp::Erode => gray_erode(img, se),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Shear angles are drawn uniformly from `[-shear_range, shear_range]`
    /// degrees.
    pub shear_range: f64,
    pub morph_elements: Vec<MorphElement>,
    pub canvas_noise_sigma: f64,
    /// Background intensity is drawn from `median +- background_interval`.
    pub background_interval: f64,
    pub row_gap: u32,
    pub word_gap: u32,
    pub margin: u32,
    /// Shrink full-page boxes to the ink actually placed.
    pub tighten_boxes: bool,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        let morph_elements = [MorphOp::Dilate, MorphOp::Erode]
            .into_iter()
            .flat_map(|op| [1, 3, 5].into_iter().map(move |size| MorphElement { op, size }))
            .collect();
        Self {
            shear_range: 12.0,
            morph_elements,
            canvas_noise_sigma: 4.0,
            background_interval: 10.0,
            row_gap: 12,
            word_gap: 16,
            margin: 24,
            tighten_boxes: false,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let ranges = [self.shear_range, self.canvas_noise_sigma, self.background_interval];
        if ranges.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidConfig("augmentation ranges must be non-negative".into()));
        }
        if self.shear_range >= 90.0 {
            return Err(Error::InvalidConfig("shear range must be below 90 degrees".into()));
        }
        for m in &self.morph_elements {
            StructuringElement::new(m.size, m.size)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledBox {
    pub bbox: BBox,
    pub label: String,
}

/// Random shear followed by a random morphology element; same size out.
pub fn augment_word(crop: &GrayImage, cfg: &AugmentConfig, rng: &mut impl Rng) -> Result<GrayImage> {
    let angle = if cfg.shear_range > 0.0 { rng.random_range(-cfg.shear_range..=cfg.shear_range) } else { 0.0 };
    let sheared = if angle == 0.0 { crop.clone() } else { shear(crop, angle) };
    match cfg.morph_elements.choose(rng) {
        Some(m) => m.apply(&sheared),
        None => Ok(sheared),
    }
}

/// Augments every ground-truth region of `page` and slots it back into
/// place. Pixels outside the boxes are untouched, so the boxes stay valid.
pub fn augment_in_place(page: &GrayImage, gts: &[BBox], cfg: &AugmentConfig) -> Result<GrayImage> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = page.clone();
    for b in gts {
        let rect = PixelRect::enclosing(b, page.width, page.height);
        if rect.w == 0 || rect.h == 0 {
            continue;
        }
        let crop = page.crop(rect);
        let aug = augment_word(&crop, cfg, &mut rng)?;
        let aug = if (aug.width, aug.height) == (rect.w, rect.h) { aug } else { resize(&aug, rect.w, rect.h) };
        out.paste(&aug, rect.x, rect.y);
    }
    Ok(out)
}

fn ink_rect(img: &GrayImage, ink_below: u8) -> Option<PixelRect> {
    let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
    for y in 0..img.height {
        for x in 0..img.width {
            if img.get(x, y) < ink_below {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
        }
    }
    (x0 != u32::MAX).then(|| PixelRect::new(x0, y0, x1 - x0, y1 - y0))
}

/// Fills a canvas with words drawn class-balanced from `word_bank`, laid
/// out left-aligned row by row. Stops when the canvas is full or
/// `max_words` words are placed.
pub fn augment_full_page(
    word_bank: &[(GrayImage, String)],
    canvas_w: u32,
    canvas_h: u32,
    max_words: usize,
    cfg: &AugmentConfig,
) -> Result<(GrayImage, Vec<LabeledBox>)> {
    cfg.validate()?;
    if word_bank.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let available = canvas_w.saturating_sub(2 * cfg.margin);
    if let Some((img, _)) = word_bank.iter().find(|(img, _)| img.width > available) {
        return Err(Error::WordTooLarge { width: img.width, available });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut classes: BTreeMap<&str, Vec<&GrayImage>> = BTreeMap::new();
    for (img, label) in word_bank {
        classes.entry(label.as_str()).or_default().push(img);
    }
    let classes: Vec<(&str, Vec<&GrayImage>)> = classes.into_iter().collect();

    let mut hist = [0u64; 256];
    for (img, _) in word_bank {
        for (h, c) in hist.iter_mut().zip(img.histogram()) {
            *h += c;
        }
    }
    let median = crate::image::median_of_histogram(&hist) as f64;
    let lo = (median - cfg.background_interval).max(0.0);
    let hi = (median + cfg.background_interval).min(255.0);
    let bg = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let mut canvas = GrayImage::new(canvas_w, canvas_h, 0);
    if cfg.canvas_noise_sigma > 0.0 {
        let noise = Normal::new(bg, cfg.canvas_noise_sigma).map_err(|_| Error::InvalidConfig("noise sigma".into()))?;
        for p in canvas.pixels.iter_mut() {
            *p = libm::round(noise.sample(&mut rng)).clamp(0.0, 255.0) as u8;
        }
    } else {
        canvas.pixels.fill(libm::round(bg) as u8);
    }

    let mut gts = Vec::new();
    let (mut x, mut y, mut row_h) = (cfg.margin, cfg.margin, 0u32);
    let right = canvas_w - cfg.margin;
    let bottom = canvas_h.saturating_sub(cfg.margin);
    while gts.len() < max_words {
        let (label, instances) = &classes[rng.random_range(0..classes.len())];
        let src = instances[rng.random_range(0..instances.len())];
        let word = augment_word(src, cfg, &mut rng)?;
        if x > cfg.margin && x + word.width > right {
            x = cfg.margin;
            y += row_h + cfg.row_gap;
            row_h = 0;
        }
        if y + word.height > bottom {
            break;
        }
        canvas.paste_darken(&word, x, y);
        let rect = if cfg.tighten_boxes {
            ink_rect(&word, 128).map(|r| PixelRect::new(x + r.x, y + r.y, r.w, r.h))
        } else {
            Some(PixelRect::new(x, y, word.width, word.height))
        };
        if let Some(r) = rect {
            gts.push(LabeledBox { bbox: r.to_bbox(), label: String::from(*label) });
        }
        x += word.width + cfg.word_gap;
        row_h = row_h.max(word.height);
    }
    Ok((canvas, gts))
}

/// 3 columns x 5 rows per symbol, row-major, the high bit is column 0.
const GLYPHS: [(char, [u8; 5]); 36] = [
    ('0', [0b111, 0b101, 0b101, 0b101, 0b111]),
    ('1', [0b010, 0b110, 0b010, 0b010, 0b111]),
    ('2', [0b111, 0b001, 0b111, 0b100, 0b111]),
    ('3', [0b111, 0b001, 0b011, 0b001, 0b111]),
    ('4', [0b101, 0b101, 0b111, 0b001, 0b001]),
    ('5', [0b111, 0b100, 0b111, 0b001, 0b111]),
    ('6', [0b111, 0b100, 0b111, 0b101, 0b111]),
    ('7', [0b111, 0b001, 0b010, 0b010, 0b010]),
    ('8', [0b111, 0b101, 0b111, 0b101, 0b111]),
    ('9', [0b111, 0b101, 0b111, 0b001, 0b111]),
    ('a', [0b010, 0b101, 0b111, 0b101, 0b101]),
    ('b', [0b110, 0b101, 0b110, 0b101, 0b110]),
    ('c', [0b011, 0b100, 0b100, 0b100, 0b011]),
    ('d', [0b110, 0b101, 0b101, 0b101, 0b110]),
    ('e', [0b111, 0b100, 0b110, 0b100, 0b111]),
    ('f', [0b111, 0b100, 0b110, 0b100, 0b100]),
    ('g', [0b011, 0b100, 0b101, 0b101, 0b011]),
    ('h', [0b101, 0b101, 0b111, 0b101, 0b101]),
    ('i', [0b111, 0b010, 0b010, 0b010, 0b111]),
    ('j', [0b001, 0b001, 0b001, 0b101, 0b010]),
    ('k', [0b101, 0b101, 0b110, 0b101, 0b101]),
    ('l', [0b100, 0b100, 0b100, 0b100, 0b111]),
    ('m', [0b101, 0b111, 0b111, 0b101, 0b101]),
    ('n', [0b110, 0b101, 0b101, 0b101, 0b101]),
    ('o', [0b010, 0b101, 0b101, 0b101, 0b010]),
    ('p', [0b110, 0b101, 0b110, 0b100, 0b100]),
    ('q', [0b010, 0b101, 0b101, 0b110, 0b011]),
    ('r', [0b110, 0b101, 0b110, 0b101, 0b101]),
    ('s', [0b011, 0b100, 0b010, 0b001, 0b110]),
    ('t', [0b111, 0b010, 0b010, 0b010, 0b010]),
    ('u', [0b101, 0b101, 0b101, 0b101, 0b111]),
    ('v', [0b101, 0b101, 0b101, 0b101, 0b010]),
    ('w', [0b101, 0b101, 0b111, 0b111, 0b101]),
    ('x', [0b101, 0b101, 0b010, 0b101, 0b101]),
    ('y', [0b101, 0b101, 0b010, 0b010, 0b010]),
    ('z', [0b111, 0b001, 0b010, 0b100, 0b111]),
];

pub const GLYPH_W: u32 = 3;
pub const GLYPH_H: u32 = 5;

/// Bit pattern of `c`, if the font covers it.
pub fn glyph(c: char) -> Option<[u8; 5]> {
    GLYPHS.iter().find(|(g, _)| *g == c).map(|(_, rows)| *rows)
}

pub fn glyph_symbols() -> Alphabet {
    let s: String = GLYPHS.iter().map(|(c, _)| *c).collect();
    Alphabet::new(&s).expect("font symbols are distinct")
}

/// Width of a rendered word: glyphs plus one blank column between them,
/// all times `scale`.
pub fn rendered_width(len: usize, scale: u32) -> u32 {
    let len = len as u32;
    scale * (GLYPH_W * len + len.saturating_sub(1))
}

/// Renders `word` in black on white; errors on symbols the font lacks.
pub fn render_word(word: &str, scale: u32) -> Result<GrayImage> {
    let chars: Vec<char> = word.chars().collect();
    if chars.is_empty() {
        return Err(Error::EmptyLabel);
    }
    let patterns: Vec<[u8; 5]> = chars.iter().map(|&c| glyph(c).ok_or(Error::UnknownSymbol(c))).collect::<Result<_>>()?;
    let w = rendered_width(chars.len(), scale);
    let h = GLYPH_H * scale;
    Ok(GrayImage::from_fn(w, h, |x, y| {
        let col = x / scale;
        let (g, cx) = (col / (GLYPH_W + 1), col % (GLYPH_W + 1));
        if cx == GLYPH_W {
            return 255;
        }
        let row = patterns[g as usize][(y / scale) as usize];
        if row & (1 << (GLYPH_W - 1 - cx)) != 0 {
            0
        } else {
            255
        }
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCorpusConfig {
    pub vocabulary: Vec<String>,
    pub glyph_scale: u32,
    pub pages: usize,
    pub words_per_page: usize,
    pub canvas_w: u32,
    pub canvas_h: u32,
    pub augment: AugmentConfig,
    pub seed: u64,
}

impl Default for SyntheticCorpusConfig {
    fn default() -> Self {
        Self {
            vocabulary: ["ab", "cab", "dog", "fish", "jump"].iter().map(|s| String::from(*s)).collect(),
            glyph_scale: 3,
            pages: 1,
            words_per_page: 40,
            canvas_w: 800,
            canvas_h: 600,
            augment: AugmentConfig { tighten_boxes: true, ..AugmentConfig::default() },
            seed: 0,
        }
    }
}

/// One page of the glyph corpus. Page `i` depends only on `seed + i`.
pub fn synthetic_page(cfg: &SyntheticCorpusConfig, page: usize) -> Result<(GrayImage, Vec<LabeledBox>)> {
    if cfg.vocabulary.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if cfg.glyph_scale == 0 {
        return Err(Error::InvalidConfig("glyph scale must be positive".into()));
    }
    let bank: Vec<(GrayImage, String)> =
        cfg.vocabulary.iter().map(|w| Ok((render_word(w, cfg.glyph_scale)?, w.clone()))).collect::<Result<_>>()?;
    let aug = AugmentConfig { seed: cfg.seed.wrapping_add(page as u64), ..cfg.augment.clone() };
    augment_full_page(&bank, cfg.canvas_w, cfg.canvas_h, cfg.words_per_page, &aug)
}

pub fn generate_synthetic_corpus(cfg: &SyntheticCorpusConfig) -> Result<Vec<(GrayImage, Vec<LabeledBox>)>> {
    (0..cfg.pages).map(|i| synthetic_page(cfg, i)).collect()
}

/// Per-class placement counts, for checking class balance.
pub fn class_histogram(gts: &[LabeledBox]) -> BTreeMap<String, usize> {
    let mut h = BTreeMap::new();
    for g in gts {
        *h.entry(g.label.clone()).or_insert(0) += 1;
    }
    h
}

/// Every 36 symbols once, in font order.
pub fn font_table() -> Vec<(char, [u8; 5])> {
    GLYPHS.to_vec()
}
