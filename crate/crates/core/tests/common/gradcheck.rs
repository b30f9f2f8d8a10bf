//! Central finite-difference checks; each returns the worst relative error
//! over its trials.

use rand::Rng;
use wordspot_core::embedder::{batch_loss, DenseNet, EmbedNetConfig, EmbeddingLoss, Mat, Objective, TrainingBatch};
use wordspot_core::losses::{
    bce_embedding_loss, cosine_embedding_loss, cosine_loss, logistic_score_loss, smooth_l1, LossWeights, MarginConfig,
};

use super::{max_rel_err, numeric_grad, rng};

pub const H: f64 = 1e-6;
pub const TOL: f64 = 1e-4;
pub const FLOOR: f64 = 1e-5;
pub const TRIALS: usize = 100;

fn vec_in(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn smooth_l1_worst() -> f64 {
    let mut rng = rng(10);
    let mut worst: f64 = 0.0;
    for _ in 0..TRIALS {
        let t = vec_in(&mut rng, 4, -2.0, 2.0);
        let mut x = vec_in(&mut rng, 4, -4.0, 4.0);
        // keep clear of the knee at |x - t| = 1
        for (xi, ti) in x.iter_mut().zip(&t) {
            if ((*xi - ti).abs() - 1.0).abs() < 1e-3 {
                *xi += 0.01;
            }
        }
        let (_, g) = smooth_l1(&x, &t);
        let n = numeric_grad(&x, H, |x| smooth_l1(x, &t).0);
        worst = worst.max(max_rel_err(&g, &n, FLOOR));
    }
    worst
}

pub fn logistic_worst() -> f64 {
    let mut rng = rng(11);
    let mut worst: f64 = 0.0;
    for _ in 0..TRIALS {
        let z = rng.random_range(-15.0..15.0);
        let y = rng.random_bool(0.5);
        let (_, g) = logistic_score_loss(z, y);
        let n = numeric_grad(&[z], H, |x| logistic_score_loss(x[0], y).0);
        worst = worst.max(max_rel_err(&[g], &n, FLOOR));
    }
    worst
}

/// Both branches of the cosine embedding loss; odd trials make the
/// non-matching hinge active.
pub fn cosine_embedding_worst() -> f64 {
    let mut rng = rng(12);
    let m = MarginConfig::default();
    let mut worst: f64 = 0.0;
    for trial in 0..TRIALS {
        let u = vec_in(&mut rng, 12, -1.0, 1.0);
        let mut v = vec_in(&mut rng, 12, -1.0, 1.0);
        if trial % 2 == 1 {
            for (vi, ui) in v.iter_mut().zip(&u) {
                *vi = 0.3 * *vi + ui;
            }
        }
        for matching in [true, false] {
            let (_, g) = cosine_embedding_loss(&v, &u, matching, &m).unwrap();
            let n = numeric_grad(&v, H, |x| cosine_embedding_loss(x, &u, matching, &m).unwrap().0);
            worst = worst.max(max_rel_err(&g, &n, FLOOR));
        }
    }
    worst
}

pub fn cosine_worst() -> f64 {
    let mut rng = rng(13);
    let mut worst: f64 = 0.0;
    for _ in 0..TRIALS {
        let u = vec_in(&mut rng, 9, -1.0, 1.0);
        let v = vec_in(&mut rng, 9, -1.0, 1.0);
        let (_, g) = cosine_loss(&v, &u).unwrap();
        let n = numeric_grad(&v, H, |x| cosine_loss(x, &u).unwrap().0);
        worst = worst.max(max_rel_err(&g, &n, FLOOR));
    }
    worst
}

pub fn bce_worst() -> f64 {
    let mut rng = rng(14);
    let mut worst: f64 = 0.0;
    for _ in 0..TRIALS {
        let z = vec_in(&mut rng, 10, -6.0, 6.0);
        let t: Vec<f64> = (0..10).map(|_| rng.random_range(0..2) as f64).collect();
        let (_, g) = bce_embedding_loss(&z, &t).unwrap();
        let n = numeric_grad(&z, H, |x| bce_embedding_loss(x, &t).unwrap().0);
        worst = worst.max(max_rel_err(&g, &n, FLOOR));
    }
    worst
}

fn set_params(net: &mut DenseNet, flat: &[f64]) {
    let mut it = flat.iter();
    for block in net.trainable_blocks_mut() {
        for v in block.iter_mut() {
            *v = *it.next().unwrap();
        }
    }
}

fn tiny_batch(rng: &mut impl Rng, loss: EmbeddingLoss) -> TrainingBatch {
    let rows: Vec<Vec<f64>> = (0..3).map(|_| vec_in(rng, 6, -1.0, 1.0)).collect();
    let target = |rng: &mut _| -> Vec<f64> {
        match loss {
            EmbeddingLoss::Bce => (0..4).map(|_| Rng::random_range(rng, 0..2) as f64).collect(),
            _ => vec_in(rng, 4, -1.0, 1.0),
        }
    };
    TrainingBatch {
        features: Mat::from_rows(&rows).unwrap(),
        is_word: vec![true, true, false],
        targets: vec![Some(target(rng)), Some(target(rng)), None],
        mismatched: vec![Some(target(rng)), None, None],
    }
}

/// Every trainable parameter of a small network under each embedding loss.
pub fn full_network_worst() -> f64 {
    let mut rng = rng(15);
    let losses = [EmbeddingLoss::Cosine, EmbeddingLoss::CosineEmbedding, EmbeddingLoss::Bce];
    let mut worst: f64 = 0.0;
    for trial in 0..TRIALS {
        let loss = losses[trial % 3];
        let cfg = EmbedNetConfig {
            input_dim: 6,
            hidden_dims: vec![8],
            out_dim: 4,
            seed: trial as u64,
            output_activation: loss.output_activation(),
            ..EmbedNetConfig::default()
        };
        let mut net = DenseNet::new(cfg).unwrap();
        // larger head weights than the default init so every path carries signal
        for w in net.embed.weight.iter_mut().chain(net.score.weight.iter_mut()) {
            *w = rng.random_range(-0.5..0.5);
        }
        let obj = Objective { loss, weights: LossWeights::default(), margin: MarginConfig { gamma: -0.5 } };
        let batch = tiny_batch(&mut rng, loss);
        let (_, _, grads) = batch_loss(&net, &batch, &obj).unwrap();
        let analytic: Vec<f64> = grads.concat();
        let theta: Vec<f64> = net.trainable_blocks().concat();
        let mut probe = net.clone();
        let numeric = numeric_grad(&theta, H, |p| {
            set_params(&mut probe, p);
            batch_loss(&probe, &batch, &obj).unwrap().0.total
        });
        worst = worst.max(max_rel_err(&analytic, &numeric, FLOOR));
    }
    worst
}
