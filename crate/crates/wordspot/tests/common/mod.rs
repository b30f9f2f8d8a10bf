#![allow(dead_code)]

use std::path::Path;

use wordspot::formats::IndexFile;
use wordspot::io::{list_pages, save_png, write_json, Page, Sidecar};
use wordspot::pipeline::{assemble_index, load_labeled, score_pages};
use wordspot_core::augment::{synthetic_page, SyntheticCorpusConfig};
use wordspot_core::embedder::{DenseNet, EmbedNetConfig, EmbeddingLoss, PatchFeatures, TrainedModel};
use wordspot_core::index::IndexConfig;
use wordspot_core::text::TextEmbedder;

pub const VOCAB: [&str; 8] = ["alpha", "beta", "gamma", "delta", "omega", "kappa", "sigma", "theta"];

/// Untrained but valid model with `f32`-representable parameters.
pub fn model(seed: u64) -> TrainedModel {
    let text = TextEmbedder::dctow();
    let cfg = EmbedNetConfig { hidden_dims: vec![32], out_dim: text.dim(), seed, ..EmbedNetConfig::default() };
    let mut net = DenseNet::new(cfg).unwrap();
    net.round_to_f32();
    TrainedModel::new(text, EmbeddingLoss::Cosine, PatchFeatures::default(), net).unwrap()
}

pub fn synth_config(pages: usize, seed: u64) -> SyntheticCorpusConfig {
    SyntheticCorpusConfig {
        vocabulary: VOCAB.iter().map(|s| s.to_string()).collect(),
        pages,
        words_per_page: 20,
        canvas_w: 500,
        canvas_h: 300,
        seed,
        ..SyntheticCorpusConfig::default()
    }
}

/// Writes synthetic pages with sidecars into `dir` and loads them back.
pub fn synth_dir(dir: &Path, pages: usize, seed: u64) -> Vec<Page> {
    let cfg = synth_config(pages, seed);
    for i in 0..pages {
        let (img, words) = synthetic_page(&cfg, i).unwrap();
        let id = format!("p{i}");
        save_png(&img, &dir.join(format!("{id}.png"))).unwrap();
        write_json(&Sidecar::from_boxes(&id, &words), &dir.join(format!("{id}.json"))).unwrap();
    }
    load_labeled(&list_pages(dir).unwrap()).unwrap()
}

pub fn index_config() -> IndexConfig {
    IndexConfig { resize_target: 500, ..IndexConfig::default() }
}

pub fn fixture_index(pages: &[Page], model: &TrainedModel) -> IndexFile {
    let cfg = index_config();
    let scored = score_pages(pages, model, &cfg).unwrap();
    assemble_index(&scored, model, &cfg.query).unwrap()
}
