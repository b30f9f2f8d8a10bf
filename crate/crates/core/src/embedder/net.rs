//! Fully connected embedding network: `Linear -> BatchNorm -> tanh` hidden
//! layers, a linear embedding head with L2-normalized output, and a linear
//! wordness head on the last hidden activations.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::sigmoid;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch { expected: cols, actual: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for k in 0..4 {
            acc[k] += a[4 * c + k] * b[4 * c + k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Activation applied to the embedding head before L2 normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Identity,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedNetConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub out_dim: usize,
    pub seed: u64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    pub output_activation: OutputActivation,
}

impl Default for EmbedNetConfig {
    fn default() -> Self {
        Self {
            input_dim: 160,
            hidden_dims: vec![256, 256],
            out_dim: 108,
            seed: 0,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
            output_activation: OutputActivation::Identity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `out_dim x in_dim`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    fn init(in_dim: usize, out_dim: usize, std: f64, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, std).expect("finite std");
        Self {
            in_dim,
            out_dim,
            weight: (0..in_dim * out_dim).map(|_| normal.sample(rng)).collect(),
            bias: vec![0.0; out_dim],
        }
    }

    fn forward(&self, x: &Mat) -> Mat {
        let mut out = Mat::zeros(x.rows, self.out_dim);
        for n in 0..x.rows {
            let xr = x.row(n);
            let or = out.row_mut(n);
            for o in 0..self.out_dim {
                or[o] = dot(xr, &self.weight[o * self.in_dim..(o + 1) * self.in_dim]) + self.bias[o];
            }
        }
        out
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    fn backward(&self, x: &Mat, dout: &Mat, dw: &mut [f64], db: &mut [f64]) -> Mat {
        let mut dx = Mat::zeros(x.rows, self.in_dim);
        for n in 0..x.rows {
            let d = dout.row(n);
            let xr = x.row(n);
            for o in 0..self.out_dim {
                let g = d[o];
                if g == 0.0 {
                    continue;
                }
                db[o] += g;
                axpy(g, xr, &mut dw[o * self.in_dim..(o + 1) * self.in_dim]);
                axpy(g, &self.weight[o * self.in_dim..(o + 1) * self.in_dim], dx.row_mut(n));
            }
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenLayer {
    pub linear: Linear,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    pub config: EmbedNetConfig,
    pub hidden: Vec<HiddenLayer>,
    pub embed: Linear,
    pub score: Linear,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    mode: Mode,
    /// Input of every hidden layer, then the input of the heads.
    inputs: Vec<Mat>,
    /// Normalized pre-activations of every hidden layer.
    pub xhat: Vec<Mat>,
    inv_std: Vec<Vec<f64>>,
    /// Batch statistics per hidden layer (train mode only).
    batch_stats: Vec<(Vec<f64>, Vec<f64>)>,
    /// Raw embedding-head output before activation and normalization.
    pub raw: Mat,
    pub score_logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetOutput {
    /// Unit-norm rows.
    pub embeddings: Mat,
    pub score_logits: Vec<f64>,
}

/// Gradients in [`DenseNet::trainable_blocks`] order.
pub type Grads = Vec<Vec<f64>>;

impl DenseNet {
    pub fn new(config: EmbedNetConfig) -> Result<Self> {
        if config.input_dim == 0 || config.out_dim == 0 || config.hidden_dims.contains(&0) {
            return Err(Error::InvalidConfig("network dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut hidden = Vec::new();
        let mut fan_in = config.input_dim;
        for &h in &config.hidden_dims {
            let std = libm::sqrt(2.0 / fan_in as f64);
            hidden.push(HiddenLayer {
                linear: Linear::init(fan_in, h, std, &mut rng),
                gamma: vec![1.0; h],
                beta: vec![0.0; h],
                running_mean: vec![0.0; h],
                running_var: vec![1.0; h],
            });
            fan_in = h;
        }
        let embed = Linear::init(fan_in, config.out_dim, 0.01, &mut rng);
        let score = Linear::init(fan_in, 1, 0.01, &mut rng);
        Ok(Self { config, hidden, embed, score })
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn out_dim(&self) -> usize {
        self.config.out_dim
    }

    /// Trainable parameter blocks in declaration order.
    pub fn trainable_blocks(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.hidden {
            out.extend([&l.linear.weight[..], &l.linear.bias[..], &l.gamma[..], &l.beta[..]]);
        }
        out.extend([&self.embed.weight[..], &self.embed.bias[..], &self.score.weight[..], &self.score.bias[..]]);
        out
    }

    pub fn trainable_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.hidden {
            out.push(&mut l.linear.weight);
            out.push(&mut l.linear.bias);
            out.push(&mut l.gamma);
            out.push(&mut l.beta);
        }
        out.push(&mut self.embed.weight);
        out.push(&mut self.embed.bias);
        out.push(&mut self.score.weight);
        out.push(&mut self.score.bias);
        out
    }

    /// Every stored block, running statistics included, in declaration
    /// order. This is the checkpoint layout.
    pub fn all_blocks(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.hidden {
            out.extend([
                &l.linear.weight[..],
                &l.linear.bias[..],
                &l.gamma[..],
                &l.beta[..],
                &l.running_mean[..],
                &l.running_var[..],
            ]);
        }
        out.extend([&self.embed.weight[..], &self.embed.bias[..], &self.score.weight[..], &self.score.bias[..]]);
        out
    }

    pub fn all_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.hidden {
            out.push(&mut l.linear.weight);
            out.push(&mut l.linear.bias);
            out.push(&mut l.gamma);
            out.push(&mut l.beta);
            out.push(&mut l.running_mean);
            out.push(&mut l.running_var);
        }
        out.push(&mut self.embed.weight);
        out.push(&mut self.embed.bias);
        out.push(&mut self.score.weight);
        out.push(&mut self.score.bias);
        out
    }

    pub fn zero_grads(&self) -> Grads {
        self.trainable_blocks().iter().map(|b| vec![0.0; b.len()]).collect()
    }

    /// Rounds every stored value to the nearest `f32`.
    pub fn round_to_f32(&mut self) {
        for block in self.all_blocks_mut() {
            for v in block.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    pub fn forward_cached(&self, x: &Mat, mode: Mode) -> Result<ForwardCache> {
        if x.cols != self.config.input_dim {
            return Err(Error::DimensionMismatch { expected: self.config.input_dim, actual: x.cols });
        }
        let n = x.rows;
        let eps = self.config.bn_eps;
        let mut inputs = vec![x.clone()];
        let mut xhats = Vec::new();
        let mut inv_stds = Vec::new();
        let mut batch_stats = Vec::new();
        for layer in &self.hidden {
            let z = layer.linear.forward(inputs.last().expect("input"));
            let d = layer.linear.out_dim;
            let (mean, var) = match mode {
                Mode::Train => {
                    let mut mean = vec![0.0; d];
                    for i in 0..n {
                        axpy(1.0, z.row(i), &mut mean);
                    }
                    mean.iter_mut().for_each(|m| *m /= n as f64);
                    let mut var = vec![0.0; d];
                    for i in 0..n {
                        for (j, v) in var.iter_mut().enumerate() {
                            let c = z.row(i)[j] - mean[j];
                            *v += c * c;
                        }
                    }
                    var.iter_mut().for_each(|v| *v /= n as f64);
                    (mean, var)
                }
                Mode::Eval => (layer.running_mean.clone(), layer.running_var.clone()),
            };
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + eps)).collect();
            let mut xhat = Mat::zeros(n, d);
            let mut act = Mat::zeros(n, d);
            for i in 0..n {
                for j in 0..d {
                    let xh = (z.row(i)[j] - mean[j]) * inv_std[j];
                    xhat.row_mut(i)[j] = xh;
                    act.row_mut(i)[j] = libm::tanh(layer.gamma[j] * xh + layer.beta[j]);
                }
            }
            xhats.push(xhat);
            inv_stds.push(inv_std);
            if mode == Mode::Train {
                batch_stats.push((mean, var));
            }
            inputs.push(act);
        }
        let feats = inputs.last().expect("head input");
        let raw = self.embed.forward(feats);
        let score_logits = self.score.forward(feats).data;
        Ok(ForwardCache { mode, inputs, xhat: xhats, inv_std: inv_stds, batch_stats, raw, score_logits })
    }

    /// Unit-norm embeddings for the raw head output.
    pub fn normalize_output(&self, raw: &Mat) -> Mat {
        let mut out = raw.clone();
        for i in 0..out.rows {
            let row = out.row_mut(i);
            if self.config.output_activation == OutputActivation::Sigmoid {
                row.iter_mut().for_each(|v| *v = sigmoid(*v));
            }
            let norm = libm::sqrt(dot(row, row));
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        out
    }

    pub fn forward(&self, x: &Mat, mode: Mode) -> Result<NetOutput> {
        let cache = self.forward_cached(x, mode)?;
        Ok(NetOutput { embeddings: self.normalize_output(&cache.raw), score_logits: cache.score_logits })
    }

    /// Folds the batch statistics of a train-mode pass into the running
    /// estimates (unbiased variance).
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        let m = self.config.bn_momentum;
        let n = cache.inputs[0].rows as f64;
        for (layer, (mean, var)) in self.hidden.iter_mut().zip(&cache.batch_stats) {
            let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
            for j in 0..mean.len() {
                layer.running_mean[j] = (1.0 - m) * layer.running_mean[j] + m * mean[j];
                layer.running_var[j] = (1.0 - m) * layer.running_var[j] + m * var[j] * unbias;
            }
        }
    }

    /// Backpropagates gradients of the raw embedding output and the score
    /// logits through the network.
    pub fn backward(&self, cache: &ForwardCache, d_raw: &Mat, d_score: &[f64]) -> Grads {
        let mut grads = self.zero_grads();
        let nh = self.hidden.len();
        let head_in = &cache.inputs[nh];
        let base = 4 * nh;
        let d_score = Mat { rows: d_score.len(), cols: 1, data: d_score.to_vec() };
        let (gw, rest) = grads[base..].split_at_mut(1);
        let (gb, rest) = rest.split_at_mut(1);
        let mut d_act = self.embed.backward(head_in, d_raw, &mut gw[0], &mut gb[0]);
        let (sw, sb) = rest.split_at_mut(1);
        let d_from_score = self.score.backward(head_in, &d_score, &mut sw[0], &mut sb[0]);
        axpy(1.0, &d_from_score.data, &mut d_act.data);

        for l in (0..nh).rev() {
            let layer = &self.hidden[l];
            let act = &cache.inputs[l + 1];
            let xhat = &cache.xhat[l];
            let inv_std = &cache.inv_std[l];
            let n = act.rows;
            let d = layer.linear.out_dim;
            let mut dxhat = Mat::zeros(n, d);
            let mut dgamma = vec![0.0; d];
            let mut dbeta = vec![0.0; d];
            for i in 0..n {
                for j in 0..d {
                    let a = act.row(i)[j];
                    let dy = d_act.row(i)[j] * (1.0 - a * a);
                    dgamma[j] += dy * xhat.row(i)[j];
                    dbeta[j] += dy;
                    dxhat.row_mut(i)[j] = dy * layer.gamma[j];
                }
            }
            let mut dz = Mat::zeros(n, d);
            match cache.mode {
                Mode::Train => {
                    let nf = n as f64;
                    let mut sum_dx = vec![0.0; d];
                    let mut sum_dx_xhat = vec![0.0; d];
                    for i in 0..n {
                        for j in 0..d {
                            sum_dx[j] += dxhat.row(i)[j];
                            sum_dx_xhat[j] += dxhat.row(i)[j] * xhat.row(i)[j];
                        }
                    }
                    for i in 0..n {
                        for j in 0..d {
                            dz.row_mut(i)[j] = inv_std[j] / nf
                                * (nf * dxhat.row(i)[j] - sum_dx[j] - xhat.row(i)[j] * sum_dx_xhat[j]);
                        }
                    }
                }
                Mode::Eval => {
                    for i in 0..n {
                        for j in 0..d {
                            dz.row_mut(i)[j] = dxhat.row(i)[j] * inv_std[j];
                        }
                    }
                }
            }
            let block = &mut grads[4 * l..4 * l + 4];
            let (w, rest) = block.split_at_mut(1);
            let (b, rest) = rest.split_at_mut(1);
            d_act = layer.linear.backward(&cache.inputs[l], &dz, &mut w[0], &mut b[0]);
            rest[0].copy_from_slice(&dgamma);
            rest[1].copy_from_slice(&dbeta);
        }
        grads
    }
}
