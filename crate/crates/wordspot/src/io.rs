//! Page images, ground-truth sidecars and dataset directories.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, ImageFormat, Luma};
use serde::{Deserialize, Serialize};
use wordspot_core::augment::LabeledBox;
use wordspot_core::eval::GroundTruth;
use wordspot_core::{BBox, GrayImage};

use crate::error::{Error, Result};

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "jpg", "jpeg", "tif", "tiff"];

pub fn load_gray(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image { path: path.into(), message: other.to_string() },
    })?;
    let luma = img.to_luma8();
    let (w, h) = luma.dimensions();
    Ok(GrayImage::from_pixels(w, h, luma.into_raw())?)
}

pub fn encode_png(img: &GrayImage) -> Vec<u8> {
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(img.width, img.height, img.pixels.clone()).expect("pixel count matches");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png).expect("in-memory PNG encoding");
    out.into_inner()
}

pub fn save_png(img: &GrayImage, path: &Path) -> Result<()> {
    fs::write(path, encode_png(img)).map_err(|e| Error::io(path, e))
}

/// One word of a ground-truth sidecar, integer corner-form box.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SidecarWord {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
    pub label: String,
}

/// Ground truth of one page: `{page, words: [{x, y, w, h, label}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub page: String,
    pub words: Vec<SidecarWord>,
}

impl Sidecar {
    pub fn from_boxes(page: &str, boxes: &[LabeledBox]) -> Self {
        let words = boxes
            .iter()
            .map(|b| {
                let [x, y, w, h] = b.bbox.to_int_xywh();
                SidecarWord { x, y, w, h, label: b.label.clone() }
            })
            .collect();
        Sidecar { page: page.into(), words }
    }

    pub fn boxes(&self) -> Vec<LabeledBox> {
        self.words
            .iter()
            .map(|w| LabeledBox { bbox: BBox::from_xywh(w.x as f64, w.y as f64, w.w as f64, w.h as f64), label: w.label.clone() })
            .collect()
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::json(path.display().to_string(), e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::json(path.display().to_string(), e))?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// A page of a dataset directory. The page id is the image file stem.
#[derive(Debug, Clone, PartialEq)]
pub struct PageFile {
    pub id: String,
    pub image_path: PathBuf,
    pub sidecar_path: Option<PathBuf>,
}

/// Image files of `dir` sorted by page id, each with its `<stem>.json`
/// sidecar when present.
pub fn list_pages(dir: &Path) -> Result<Vec<PageFile>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut pages = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase());
        if !ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            continue;
        }
        let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(String::from) else { continue };
        let sidecar = path.with_extension("json");
        pages.push(PageFile { id, sidecar_path: sidecar.is_file().then_some(sidecar), image_path: path });
    }
    pages.sort_by(|a, b| a.id.cmp(&b.id).then_with(|| a.image_path.cmp(&b.image_path)));
    if let Some(w) = pages.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(Error::Usage(format!("two images share the page id {:?}", w[0].id)));
    }
    Ok(pages)
}

/// A loaded page with its ground truth (empty without a sidecar).
#[derive(Debug, Clone)]
pub struct Page {
    pub file: PageFile,
    pub image: GrayImage,
    pub words: Vec<LabeledBox>,
}

pub fn load_page(file: &PageFile) -> Result<Page> {
    let image = load_gray(&file.image_path)?;
    let words = match &file.sidecar_path {
        Some(p) => read_json::<Sidecar>(p)?.boxes(),
        None => Vec::new(),
    };
    Ok(Page { file: file.clone(), image, words })
}

pub fn load_dataset(dir: &Path) -> Result<Vec<Page>> {
    list_pages(dir)?.iter().map(load_page).collect()
}

pub fn ground_truth(pages: &[Page]) -> Vec<GroundTruth> {
    pages
        .iter()
        .flat_map(|p| p.words.iter().map(|w| GroundTruth { page_id: p.file.id.clone(), bbox: w.bbox, label: w.label.clone() }))
        .collect()
}
