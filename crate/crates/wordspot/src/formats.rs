//! Binary model (`WSPT`) and index (`WSIX`) files.
//!
//! Both are little-endian. A model file is the magic, a `u32` version, a
//! `u32`-length JSON header holding the [`ModelConfig`], and every parameter
//! block as `f32`. An index file is the magic, a `u32` version, the
//! embedding kind (`u8`), the descriptor dimension (`u32`), the query
//! thresholds, the embedded model file, then per-page records, and a CRC32
//! of everything before it.

use std::fs;
use std::path::Path;

use wordspot_core::embedder::{ModelConfig, TrainedModel, MODEL_VERSION};
use wordspot_core::index::{PageIndex, Proposal, QueryConfig};
use wordspot_core::text::EmbeddingKind;
use wordspot_core::BBox;

use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"WSPT";
pub const INDEX_MAGIC: &[u8; 4] = b"WSIX";
pub const INDEX_VERSION: u32 = 1;

/// A loaded index: the pages plus everything needed to query them.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexFile {
    pub query: QueryConfig,
    pub model: TrainedModel,
    pub pages: Vec<PageIndex>,
}

impl IndexFile {
    pub fn proposal_count(&self) -> usize {
        self.pages.iter().map(|p| p.proposals.len()).sum()
    }

    pub fn page(&self, id: &str) -> Option<&PageIndex> {
        self.pages.iter().find(|p| p.page_id == id)
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.0.extend_from_slice(b);
    }
    fn str(&mut self, s: &str) {
        self.bytes(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    corrupt: fn(String) -> Error,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err((self.corrupt)(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        usize::try_from(n).ok().filter(|&n| n <= self.buf.len() - self.pos).ok_or_else(|| (self.corrupt)(format!("length {n} exceeds file")))
    }
    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.len()?;
        self.take(n)
    }
    fn str(&mut self) -> Result<String> {
        let b = self.bytes()?;
        String::from_utf8(b.to_vec()).map_err(|_| (self.corrupt)("invalid UTF-8 string".into()))
    }
    fn done(&self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err((self.corrupt)(format!("{} trailing bytes", self.buf.len() - self.pos)))
        }
    }
}

pub fn encode_model(model: &TrainedModel) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MODEL_MAGIC);
    w.u32(MODEL_VERSION);
    let header = serde_json::to_vec(&model.config()).expect("model config serializes");
    w.u32(header.len() as u32);
    w.0.extend_from_slice(&header);
    for block in model.net.all_blocks() {
        for &v in block {
            w.f32(v as f32);
        }
    }
    w.0
}

pub fn decode_model(buf: &[u8]) -> Result<TrainedModel> {
    let mut r = Reader { buf, pos: 0, corrupt: Error::CorruptModel };
    if &r.array::<4>()? != MODEL_MAGIC {
        return Err(Error::CorruptModel("bad magic".into()));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: MODEL_VERSION });
    }
    let n = r.u32()? as usize;
    let header = r.take(n)?;
    let config: ModelConfig =
        serde_json::from_slice(header).map_err(|e| Error::CorruptModel(format!("header: {e}")))?;
    let sizes = block_sizes(&config)?;
    let mut blocks = Vec::with_capacity(sizes.len());
    for n in sizes {
        let mut b = Vec::with_capacity(n);
        for _ in 0..n {
            b.push(r.f32()? as f64);
        }
        blocks.push(b);
    }
    r.done()?;
    Ok(TrainedModel::from_blocks(config, &blocks)?)
}

/// Block lengths of a network built from `config`.
fn block_sizes(config: &ModelConfig) -> Result<Vec<usize>> {
    let net = wordspot_core::embedder::DenseNet::new(config.net.clone())?;
    Ok(net.all_blocks().iter().map(|b| b.len()).collect())
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    decode_model(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

fn kind_code(kind: EmbeddingKind) -> u8 {
    match kind {
        EmbeddingKind::Phoc => 0,
        EmbeddingKind::Dctow => 1,
        EmbeddingKind::Learned => 2,
    }
}

pub fn encode_index(index: &IndexFile) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(INDEX_MAGIC);
    w.u32(INDEX_VERSION);
    w.u8(kind_code(index.model.text.kind()));
    let dim = index.model.descriptor_dim();
    w.u32(dim as u32);
    w.f64(index.query.score_threshold);
    w.f64(index.query.nms_overlap);
    w.u64(index.query.k as u64);
    w.bytes(&encode_model(&index.model));
    w.u64(index.pages.len() as u64);
    for p in &index.pages {
        w.str(&p.page_id);
        w.str(&p.image_path);
        w.u32(p.width);
        w.u32(p.height);
        w.f64(p.scale);
        w.u64(p.n_dtp as u64);
        w.u64(p.n_total as u64);
        w.u64(p.proposals.len() as u64);
        for prop in &p.proposals {
            for v in [prop.bbox.xc, prop.bbox.yc, prop.bbox.w, prop.bbox.h, prop.wordness] {
                w.f64(v);
            }
            assert_eq!(prop.descriptor.len(), dim, "descriptor dimension");
            for &d in &prop.descriptor {
                w.f32(d);
            }
        }
    }
    let crc = crc32fast::hash(&w.0);
    w.u32(crc);
    w.0
}

pub fn decode_index(buf: &[u8]) -> Result<IndexFile> {
    if buf.len() < 8 || &buf[..4] != INDEX_MAGIC {
        return Err(Error::CorruptIndex("bad magic".into()));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().expect("4 bytes"));
    if version != INDEX_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: INDEX_VERSION });
    }
    if buf.len() < 12 {
        return Err(Error::CorruptIndex("truncated".into()));
    }
    let (body, trailer) = buf.split_at(buf.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(trailer.try_into().expect("4 bytes")) {
        return Err(Error::CorruptIndex("checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: 8, corrupt: Error::CorruptIndex };
    let kind = r.u8()?;
    let dim = r.u32()? as usize;
    let query = QueryConfig { score_threshold: r.f64()?, nms_overlap: r.f64()?, k: r.u64()? as usize };
    let model = decode_model(r.bytes()?).map_err(|e| match e {
        Error::CorruptModel(m) => Error::CorruptIndex(format!("embedded model: {m}")),
        other => other,
    })?;
    if kind != kind_code(model.text.kind()) || dim != model.descriptor_dim() {
        return Err(Error::CorruptIndex("header disagrees with the embedded model".into()));
    }
    let n_pages = r.u64()?;
    let mut pages = Vec::new();
    for _ in 0..n_pages {
        let page_id = r.str()?;
        let image_path = r.str()?;
        let width = r.u32()?;
        let height = r.u32()?;
        let scale = r.f64()?;
        let n_dtp = r.u64()? as usize;
        let n_total = r.u64()? as usize;
        let n = r.u64()?;
        let mut proposals = Vec::new();
        for _ in 0..n {
            let bbox = BBox::new(r.f64()?, r.f64()?, r.f64()?, r.f64()?);
            let wordness = r.f64()?;
            let descriptor = (0..dim).map(|_| r.f32()).collect::<Result<Vec<f32>>>()?;
            proposals.push(Proposal { bbox, wordness, descriptor });
        }
        pages.push(PageIndex { page_id, image_path, width, height, scale, n_dtp, n_total, proposals });
    }
    r.done()?;
    Ok(IndexFile { query, model, pages })
}

pub fn save_index(index: &IndexFile, path: &Path) -> Result<()> {
    fs::write(path, encode_index(index)).map_err(|e| Error::io(path, e))
}

pub fn load_index(path: &Path) -> Result<IndexFile> {
    decode_index(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
