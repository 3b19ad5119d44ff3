//! Loss values and their gradients with respect to logits.
//!
//! Everything is computed in log space (log-softmax, softplus) so no
//! probability is ever passed through `ln` directly.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    /// C-way softmax.
    SoftmaxMulticlass,
    /// C independent sigmoids.
    OneVsRest,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits.mapv(|z| z - lse)
}

pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    log_softmax(logits).mapv(f64::exp)
}

/// Per-class probabilities of the document head.
pub fn class_probabilities(logits: ArrayView1<f64>, mode: HeadMode) -> Array1<f64> {
    match mode {
        HeadMode::SoftmaxMulticlass => softmax(logits),
        HeadMode::OneVsRest => logits.mapv(sigmoid),
    }
}

/// Document cross-entropy: `-ln p_y` for softmax, summed binary
/// cross-entropy against the one-hot label for 1-vs-rest.
pub fn doc_cross_entropy(logits: ArrayView1<f64>, label: usize, mode: HeadMode) -> (f64, Array1<f64>) {
    match mode {
        HeadMode::SoftmaxMulticlass => {
            let lp = log_softmax(logits);
            let mut grad = lp.mapv(f64::exp);
            grad[label] -= 1.0;
            (-lp[label], grad)
        }
        HeadMode::OneVsRest => {
            let mut loss = 0.0;
            let grad = Array1::from_shape_fn(logits.len(), |c| {
                let z = logits[c];
                if c == label {
                    loss += softplus(-z);
                    sigmoid(z) - 1.0
                } else {
                    loss += softplus(z);
                    sigmoid(z)
                }
            });
            (loss, grad)
        }
    }
}

/// KL divergence from the uniform target to the head's prediction.
///
/// Softmax: `KL(U || p) = -ln C - mean_c ln p_c`. 1-vs-rest: the mean over
/// classes of `KL(Bernoulli(1/2) || Bernoulli(sigma(z_c)))`.
pub fn uniform_kl(logits: ArrayView1<f64>, mode: HeadMode) -> (f64, Array1<f64>) {
    let c = logits.len() as f64;
    match mode {
        HeadMode::SoftmaxMulticlass => {
            let lp = log_softmax(logits);
            let loss = -c.ln() - lp.sum() / c;
            let grad = lp.mapv(|l| l.exp() - 1.0 / c);
            (loss.max(0.0), grad)
        }
        HeadMode::OneVsRest => {
            let loss = logits
                .iter()
                .map(|&z| 0.5 * (softplus(z) + softplus(-z)) - std::f64::consts::LN_2)
                .sum::<f64>()
                / c;
            let grad = logits.mapv(|z| (sigmoid(z) - 0.5) / c);
            (loss.max(0.0), grad)
        }
    }
}

/// Token-level softmax cross-entropy over the vocabulary.
pub fn token_cross_entropy(logits: ArrayView1<f64>, target: usize) -> (f64, Array1<f64>) {
    let lp = log_softmax(logits);
    let mut grad = lp.mapv(f64::exp);
    grad[target] -= 1.0;
    (-lp[target], grad)
}
