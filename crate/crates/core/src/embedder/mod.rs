//! Trainable region descriptor: bilinear patch features, a dense embedding
//! network with a wordness head, ADAM training and the trained model used
//! at indexing and query time.

mod adam;
mod net;

pub use adam::{AdamConfig, AdamState};
pub use net::{DenseNet, EmbedNetConfig, ForwardCache, Grads, HiddenLayer, Linear, Mat, Mode, NetOutput, OutputActivation};

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::average_precision_from_relevance;
use crate::geometry::BBox;
use crate::image::{bilinear_roi_resize, GrayImage};
use crate::losses::{
    bce_embedding_loss, cosine_embedding_loss, cosine_loss, logistic_score_loss, sigmoid, LossWeights, MarginConfig,
};
use crate::text::{normalize_label, TextEmbedder};

pub const MODEL_VERSION: u32 = 1;

/// Turns a page region into a fixed-length feature vector.
pub trait FeatureExtractor {
    fn dim(&self) -> usize;
    fn extract(&self, img: &GrayImage, bbox: &BBox) -> Result<Vec<f64>>;
}

/// Raw-pixel patch features: the region resampled to `height x width`,
/// scaled to `[0, 1]`, mean-centered and flattened row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchFeatures {
    pub width: usize,
    pub height: usize,
}

impl Default for PatchFeatures {
    fn default() -> Self {
        Self { width: 20, height: 8 }
    }
}

impl FeatureExtractor for PatchFeatures {
    fn dim(&self) -> usize {
        self.width * self.height
    }

    fn extract(&self, img: &GrayImage, bbox: &BBox) -> Result<Vec<f64>> {
        let mut patch = bilinear_roi_resize(img, bbox, self.width, self.height)?;
        let mean = patch.iter().sum::<f64>() / patch.len() as f64;
        patch.iter_mut().for_each(|v| *v -= mean);
        Ok(patch)
    }
}

/// 8x20 patch features of `bbox`.
pub fn extract_features(img: &GrayImage, bbox: &BBox) -> Result<Vec<f64>> {
    PatchFeatures::default().extract(img, bbox)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmbeddingLoss {
    #[serde(rename = "cosine")]
    Cosine,
    #[serde(rename = "cosemb")]
    CosineEmbedding,
    #[serde(rename = "bce")]
    Bce,
}

impl EmbeddingLoss {
    pub fn output_activation(&self) -> OutputActivation {
        match self {
            EmbeddingLoss::Bce => OutputActivation::Sigmoid,
            _ => OutputActivation::Identity,
        }
    }
}

/// Loss choice and weights for one training objective:
/// `w_head * score + w_emb * emb`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub loss: EmbeddingLoss,
    pub weights: LossWeights,
    pub margin: MarginConfig,
}

/// One mini-batch. Rows with a `target` contribute to the embedding loss;
/// every row contributes to the wordness loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch {
    pub features: Mat,
    pub is_word: Vec<bool>,
    pub targets: Vec<Option<Vec<f64>>>,
    /// Non-matching targets for the `y = 0` branch of the cosine embedding
    /// loss.
    pub mismatched: Vec<Option<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub score: f64,
    pub emb: f64,
    pub total: f64,
}

/// Train-mode forward pass, loss and gradients. Does not touch `net`.
pub fn batch_loss(net: &DenseNet, batch: &TrainingBatch, obj: &Objective) -> Result<(LossReport, ForwardCache, Grads)> {
    let n = batch.features.rows;
    if batch.is_word.len() != n || batch.targets.len() != n || batch.mismatched.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: batch.targets.len() });
    }
    let cache = net.forward_cached(&batch.features, Mode::Train)?;
    let w = obj.weights;

    let mut score = 0.0;
    let mut d_score = vec![0.0; n];
    for i in 0..n {
        let (l, g) = logistic_score_loss(cache.score_logits[i], batch.is_word[i]);
        score += l;
        d_score[i] = w.w_head * g / n as f64;
    }
    score /= n as f64;

    let mut terms = Vec::new();
    for i in 0..n {
        let Some(u) = &batch.targets[i] else { continue };
        let v = cache.raw.row(i);
        match obj.loss {
            EmbeddingLoss::Cosine => terms.push((i, cosine_loss(v, u)?)),
            EmbeddingLoss::Bce => terms.push((i, bce_embedding_loss(v, u)?)),
            EmbeddingLoss::CosineEmbedding => {
                terms.push((i, cosine_embedding_loss(v, u, true, &obj.margin)?));
                if let Some(neg) = &batch.mismatched[i] {
                    terms.push((i, cosine_embedding_loss(v, neg, false, &obj.margin)?));
                }
            }
        }
    }
    let mut emb = 0.0;
    let mut d_raw = Mat::zeros(n, net.out_dim());
    if !terms.is_empty() {
        let scale = w.w_emb / terms.len() as f64;
        for (i, (l, g)) in &terms {
            emb += l;
            for (d, gi) in d_raw.row_mut(*i).iter_mut().zip(g) {
                *d += scale * gi;
            }
        }
        emb /= terms.len() as f64;
    }
    let grads = net.backward(&cache, &d_raw, &d_score);
    let total = w.w_head * score + w.w_emb * emb;
    Ok((LossReport { score, emb, total }, cache, grads))
}

/// One optimization step: loss, running statistics, ADAM update.
pub fn train_step(net: &mut DenseNet, adam: &mut AdamState, batch: &TrainingBatch, obj: &Objective) -> Result<LossReport> {
    let (report, cache, grads) = batch_loss(net, batch, obj)?;
    net.update_running_stats(&cache);
    adam.update(&mut net.trainable_blocks_mut(), &grads);
    Ok(report)
}

/// Configuration needed to rebuild a [`TrainedModel`] around stored
/// parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub version: u32,
    pub text: TextEmbedder,
    pub loss: EmbeddingLoss,
    pub features: PatchFeatures,
    pub net: EmbedNetConfig,
}

/// Region descriptors and wordness probabilities for a set of boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedded {
    pub descriptors: Vec<Vec<f64>>,
    pub wordness: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub version: u32,
    pub text: TextEmbedder,
    pub loss: EmbeddingLoss,
    pub features: PatchFeatures,
    pub net: DenseNet,
}

impl TrainedModel {
    pub fn new(text: TextEmbedder, loss: EmbeddingLoss, features: PatchFeatures, net: DenseNet) -> Result<Self> {
        if net.out_dim() != text.dim() {
            return Err(Error::DimensionMismatch { expected: text.dim(), actual: net.out_dim() });
        }
        if net.input_dim() != features.dim() {
            return Err(Error::DimensionMismatch { expected: features.dim(), actual: net.input_dim() });
        }
        Ok(Self { version: MODEL_VERSION, text, loss, features, net })
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            version: self.version,
            text: self.text.clone(),
            loss: self.loss,
            features: self.features,
            net: self.net.config.clone(),
        }
    }

    /// Rebuilds a model from its configuration and checkpoint blocks in
    /// [`DenseNet::all_blocks`] order.
    pub fn from_blocks(config: ModelConfig, blocks: &[Vec<f64>]) -> Result<Self> {
        let mut net = DenseNet::new(config.net.clone())?;
        {
            let mut dst = net.all_blocks_mut();
            if dst.len() != blocks.len() {
                return Err(Error::DimensionMismatch { expected: dst.len(), actual: blocks.len() });
            }
            for (d, s) in dst.iter_mut().zip(blocks) {
                if d.len() != s.len() {
                    return Err(Error::DimensionMismatch { expected: d.len(), actual: s.len() });
                }
                d.copy_from_slice(s);
            }
        }
        let mut model = Self::new(config.text, config.loss, config.features, net)?;
        model.version = config.version;
        Ok(model)
    }

    pub fn descriptor_dim(&self) -> usize {
        self.net.out_dim()
    }

    /// Eval-mode descriptors and wordness for `boxes` on `img`.
    pub fn embed_boxes(&self, img: &GrayImage, boxes: &[BBox]) -> Result<Embedded> {
        let mut descriptors = Vec::with_capacity(boxes.len());
        let mut wordness = Vec::with_capacity(boxes.len());
        for chunk in boxes.chunks(512) {
            let rows = chunk.iter().map(|b| self.features.extract(img, b)).collect::<Result<Vec<_>>>()?;
            let out = self.embed_features(&rows)?;
            descriptors.extend(out.descriptors);
            wordness.extend(out.wordness);
        }
        Ok(Embedded { descriptors, wordness })
    }

    pub fn embed_features(&self, rows: &[Vec<f64>]) -> Result<Embedded> {
        if rows.is_empty() {
            return Ok(Embedded { descriptors: Vec::new(), wordness: Vec::new() });
        }
        let out = self.net.forward(&Mat::from_rows(rows)?, Mode::Eval)?;
        Ok(Embedded { descriptors: out.embeddings.to_rows(), wordness: out.score_logits.iter().map(|&z| sigmoid(z)).collect() })
    }

    /// Text query vector in the descriptor space.
    pub fn embed_text(&self, query: &str) -> Result<Vec<f64>> {
        Ok(self.text.embed(query)?.values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: u64,
    pub batch_size: usize,
    /// Validation cadence in iterations.
    pub eval_every: u64,
    /// Share of word crops held out for validation.
    pub val_fraction: f64,
    pub loss: EmbeddingLoss,
    pub weights: LossWeights,
    pub margin: MarginConfig,
    pub adam: AdamConfig,
    pub hidden_dims: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            batch_size: 64,
            eval_every: 1000,
            val_fraction: 0.1,
            loss: EmbeddingLoss::Cosine,
            weights: LossWeights::default(),
            margin: MarginConfig::default(),
            adam: AdamConfig::default(),
            hidden_dims: vec![256, 256],
            seed: 0,
        }
    }
}

/// A training region: a box on a page, whether it covers a word, and the
/// word's transcription for positives.
#[derive(Debug, Clone, Copy)]
pub struct LabeledCrop<'a> {
    pub image: &'a GrayImage,
    pub bbox: BBox,
    pub label: Option<&'a str>,
    pub is_word: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainProgress {
    pub iteration: u64,
    pub lr: f64,
    /// Mean loss since the previous report.
    pub loss: LossReport,
    pub val_map: Option<f64>,
}

struct Sample {
    features: Vec<f64>,
    target: Option<usize>,
    is_word: bool,
}

/// Segmentation-based QbS MAP of `descriptors` against their own labels.
fn validation_map(model: &TrainedModel, samples: &[&Sample], targets: &[Vec<f64>]) -> Result<Option<f64>> {
    if samples.is_empty() {
        return Ok(None);
    }
    let rows: Vec<Vec<f64>> = samples.iter().map(|s| s.features.clone()).collect();
    let desc = model.embed_features(&rows)?.descriptors;
    let mut labels: Vec<usize> = samples.iter().filter_map(|s| s.target).collect();
    labels.sort_unstable();
    labels.dedup();
    let mut total = 0.0;
    for &q in &labels {
        let u = &targets[q];
        let nu = libm::sqrt(u.iter().map(|x| x * x).sum::<f64>());
        let mut scored: Vec<(f64, usize)> = desc
            .iter()
            .enumerate()
            .map(|(i, d)| (d.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() / nu, i))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let rel: Vec<bool> = scored.iter().map(|&(_, i)| samples[i].target == Some(q)).collect();
        let r = rel.iter().filter(|&&x| x).count();
        total += average_precision_from_relevance(&rel, r)?;
    }
    Ok(Some(total / labels.len() as f64))
}

/// Trains the embedder and wordness head on labeled crops.
///
/// Mini-batches hold half word crops (embedding and score targets) and half
/// background crops (score target only). The network with the best
/// validation MAP over the held-out word crops is returned, with its
/// parameters rounded to `f32` so the model survives checkpointing
/// unchanged.
pub fn train(
    corpus: &[LabeledCrop<'_>],
    text: &TextEmbedder,
    cfg: &TrainConfig,
    progress: &mut dyn FnMut(&TrainProgress),
) -> Result<TrainedModel> {
    if cfg.loss == EmbeddingLoss::Bce && !matches!(text, TextEmbedder::Phoc(_)) {
        return Err(Error::InvalidConfig("the BCE loss needs a binary (PHOC) embedding".into()));
    }
    let features = PatchFeatures::default();
    let mut label_ids: BTreeMap<String, usize> = BTreeMap::new();
    let mut targets: Vec<Vec<f64>> = Vec::new();
    let mut samples = Vec::with_capacity(corpus.len());
    for crop in corpus {
        let target = match (crop.is_word, crop.label) {
            (true, Some(raw)) => match normalize_label(raw, text.alphabet()) {
                Ok(word) => {
                    let next = targets.len();
                    let id = *label_ids.entry(word.clone()).or_insert(next);
                    if id == next {
                        targets.push(text.embed(&word)?.values);
                    }
                    Some(id)
                }
                Err(Error::EmptyLabel) => None,
                Err(e) => return Err(e),
            },
            _ => None,
        };
        if crop.is_word && target.is_none() {
            continue;
        }
        let f = match features.extract(crop.image, &crop.bbox) {
            Ok(f) => f,
            Err(Error::DegenerateBox) => continue,
            Err(e) => return Err(e),
        };
        samples.push(Sample { features: f, target, is_word: crop.is_word });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut positives: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].target.is_some()).collect();
    let negatives: Vec<usize> = (0..samples.len()).filter(|&i| !samples[i].is_word).collect();
    positives.shuffle(&mut rng);
    let n_val = if positives.len() >= 2 {
        (libm::ceil(cfg.val_fraction * positives.len() as f64) as usize).min(positives.len() - 1)
    } else {
        0
    };
    let val: Vec<&Sample> = positives[..n_val].iter().map(|&i| &samples[i]).collect();
    let train_pos = &positives[n_val..];
    if train_pos.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let net_cfg = EmbedNetConfig {
        input_dim: features.dim(),
        hidden_dims: cfg.hidden_dims.clone(),
        out_dim: text.dim(),
        seed: cfg.seed,
        output_activation: cfg.loss.output_activation(),
        ..EmbedNetConfig::default()
    };
    let net = DenseNet::new(net_cfg)?;
    let mut model = TrainedModel::new(text.clone(), cfg.loss, features, net)?;
    let shapes: Vec<usize> = model.net.trainable_blocks().iter().map(|b| b.len()).collect();
    let mut adam = AdamState::new(cfg.adam, &shapes);
    let obj = Objective { loss: cfg.loss, weights: cfg.weights, margin: cfg.margin };

    let batch = cfg.batch_size.max(2);
    let n_pos = if negatives.is_empty() { batch } else { batch / 2 };
    let mut best: Option<(f64, DenseNet)> = None;
    let mut acc = LossReport::default();
    let mut acc_n = 0u64;
    let eval_every = cfg.eval_every.max(1);
    for it in 1..=cfg.iterations {
        let mut rows = Vec::with_capacity(batch);
        let mut is_word = Vec::with_capacity(batch);
        let mut tgts = Vec::with_capacity(batch);
        let mut mism = Vec::with_capacity(batch);
        for k in 0..batch {
            let idx = if k < n_pos {
                train_pos[rng.random_range(0..train_pos.len())]
            } else {
                negatives[rng.random_range(0..negatives.len())]
            };
            let s = &samples[idx];
            rows.push(s.features.clone());
            is_word.push(s.is_word);
            tgts.push(s.target.map(|t| targets[t].clone()));
            let other = match (cfg.loss, s.target) {
                (EmbeddingLoss::CosineEmbedding, Some(t)) if targets.len() > 1 => {
                    let mut o = rng.random_range(0..targets.len() - 1);
                    if o >= t {
                        o += 1;
                    }
                    Some(targets[o].clone())
                }
                _ => None,
            };
            mism.push(other);
        }
        let tb = TrainingBatch { features: Mat::from_rows(&rows)?, is_word, targets: tgts, mismatched: mism };
        let lr = adam.lr();
        let r = train_step(&mut model.net, &mut adam, &tb, &obj)?;
        acc.score += r.score;
        acc.emb += r.emb;
        acc.total += r.total;
        acc_n += 1;
        if it % eval_every == 0 || it == cfg.iterations {
            let val_map = validation_map(&model, &val, &targets)?;
            let n = acc_n as f64;
            progress(&TrainProgress {
                iteration: it,
                lr,
                loss: LossReport { score: acc.score / n, emb: acc.emb / n, total: acc.total / n },
                val_map,
            });
            acc = LossReport::default();
            acc_n = 0;
            if let Some(m) = val_map {
                if best.as_ref().is_none_or(|(b, _)| m > *b) {
                    best = Some((m, model.net.clone()));
                }
            }
        }
    }
    if let Some((_, net)) = best {
        model.net = net;
    }
    model.net.round_to_f32();
    Ok(model)
}
