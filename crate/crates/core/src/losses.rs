//! Training losses with analytic gradients.
//!
//! Every loss returns `(value, gradient)` where the gradient is taken with
//! respect to the prediction argument.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub w_rpn: f64,
    pub w_head: f64,
    pub w_emb: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { w_rpn: 1e-2, w_head: 1e-1, w_emb: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarginConfig {
    /// Margin of the non-matching branch of the cosine embedding loss.
    pub gamma: f64,
}

impl Default for MarginConfig {
    fn default() -> Self {
        Self { gamma: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub rpn_reg: f64,
    pub rpn_score: f64,
    pub reg: f64,
    pub score: f64,
    pub emb: f64,
}

pub fn total_loss(parts: &LossParts, w: &LossWeights) -> f64 {
    w.w_rpn * (parts.rpn_reg + parts.rpn_score) + w.w_head * (parts.reg + parts.score) + w.w_emb * parts.emb
}

/// Summed smooth-L1 (Huber with unit knee).
pub fn smooth_l1(x: &[f64], t: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(x.len(), t.len());
    let mut loss = 0.0;
    let grad = x
        .iter()
        .zip(t)
        .map(|(&xi, &ti)| {
            let d = xi - ti;
            if d.abs() < 1.0 {
                loss += 0.5 * d * d;
                d
            } else {
                loss += d.abs() - 0.5;
                d.signum()
            }
        })
        .collect();
    (loss, grad)
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + libm::log1p(libm::exp(-z.abs()))
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Binary logistic loss on a single wordness logit.
pub fn logistic_score_loss(logit: f64, is_word: bool) -> (f64, f64) {
    let y = if is_word { 1.0 } else { 0.0 };
    let loss = if is_word { softplus(-logit) } else { softplus(logit) };
    (loss, sigmoid(logit) - y)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity and its gradient with respect to `v`.
fn cosine_with_grad(v: &[f64], u: &[f64]) -> Result<(f64, Vec<f64>)> {
    if v.len() != u.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), actual: v.len() });
    }
    let nv = libm::sqrt(dot(v, v));
    let nu = libm::sqrt(dot(u, u));
    if nv == 0.0 || nu == 0.0 {
        return Err(Error::ZeroVector);
    }
    let cos = dot(u, v) / (nu * nv);
    let grad = v.iter().zip(u).map(|(&vi, &ui)| ui / (nu * nv) - cos * vi / (nv * nv)).collect();
    Ok((cos, grad))
}

/// `1 - cos(u, v)` for matching pairs, `max(0, cos(u, v) - gamma)` otherwise.
/// At the hinge the subgradient 0 is used.
pub fn cosine_embedding_loss(v: &[f64], u: &[f64], matching: bool, m: &MarginConfig) -> Result<(f64, Vec<f64>)> {
    let (cos, dcos) = cosine_with_grad(v, u)?;
    if matching {
        Ok((1.0 - cos, dcos.into_iter().map(|g| -g).collect()))
    } else if cos > m.gamma {
        Ok((cos - m.gamma, dcos))
    } else {
        Ok((0.0, alloc::vec![0.0; v.len()]))
    }
}

/// `1 - cos(u, v)`.
pub fn cosine_loss(v: &[f64], u: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (cos, dcos) = cosine_with_grad(v, u)?;
    Ok((1.0 - cos, dcos.into_iter().map(|g| -g).collect()))
}

/// Per-bit binary cross entropy on sigmoid outputs, averaged over bits.
pub fn bce_embedding_loss(logits: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if logits.len() != target.len() {
        return Err(Error::DimensionMismatch { expected: target.len(), actual: logits.len() });
    }
    if target.iter().any(|&t| t != 0.0 && t != 1.0) {
        return Err(Error::NonBinaryTarget);
    }
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let grad = logits
        .iter()
        .zip(target)
        .map(|(&z, &y)| {
            loss += softplus(z) - y * z;
            (sigmoid(z) - y) / n
        })
        .collect();
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_l1_examples() {
        assert_eq!(smooth_l1(&[1.0, 2.0], &[1.0, 2.0]).0, 0.0);
        assert_eq!(smooth_l1(&[0.5], &[0.0]).0, 0.125);
        let (l, g) = smooth_l1(&[2.0], &[0.0]);
        assert_eq!((l, g[0]), (1.5, 1.0));
        assert_eq!(smooth_l1(&[-3.0], &[0.0]).1[0], -1.0);
    }

    #[test]
    fn logistic_examples() {
        let ln2 = core::f64::consts::LN_2;
        assert!((logistic_score_loss(0.0, true).0 - ln2).abs() < 1e-15);
        assert!((logistic_score_loss(0.0, false).0 - ln2).abs() < 1e-15);
        let (l, _) = logistic_score_loss(20.0, true);
        assert!((l - 2.061_153_620_314_381e-9).abs() < 1e-20);
        for z in [-100.0, -30.0, 0.0, 30.0, 100.0] {
            for y in [true, false] {
                let (l, g) = logistic_score_loss(z, y);
                assert!(l.is_finite() && g.is_finite() && l >= 0.0);
            }
        }
    }

    #[test]
    fn cosine_embedding_examples() {
        let m = MarginConfig::default();
        let u = [1.0, 2.0, -1.0];
        assert!(cosine_embedding_loss(&u, &u, true, &m).unwrap().0.abs() < 1e-15);
        assert!((cosine_embedding_loss(&u, &u, false, &m).unwrap().0 - 0.8).abs() < 1e-15);
        assert_eq!(cosine_embedding_loss(&[1.0, 0.0], &[0.0, 1.0], false, &m).unwrap().0, 0.0);
        assert_eq!(cosine_loss(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector));
    }

    #[test]
    fn cosine_loss_examples() {
        let u = [0.3, -0.7];
        assert!(cosine_loss(&u, &u).unwrap().0.abs() < 1e-15);
        assert!((cosine_loss(&[-0.3, 0.7], &u).unwrap().0 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn bce_examples() {
        let ln2 = core::f64::consts::LN_2;
        let (l, _) = bce_embedding_loss(&[0.0; 4], &[0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!((l - ln2).abs() < 1e-15);
        let (l, _) = bce_embedding_loss(&[-40.0, 40.0], &[0.0, 1.0]).unwrap();
        assert!(l < 1e-15);
        assert_eq!(bce_embedding_loss(&[0.0], &[0.5]), Err(Error::NonBinaryTarget));
    }

    #[test]
    fn total_loss_weights() {
        let w = LossWeights::default();
        assert_eq!(total_loss(&LossParts::default(), &w), 0.0);
        let ones = LossParts { rpn_reg: 1.0, rpn_score: 1.0, reg: 1.0, score: 1.0, emb: 1.0 };
        assert_eq!(total_loss(&ones, &w), 3.22);
    }
}
