use ndarray::{Array1, Array2};
use rand::Rng as _;

use super::ModelConfig;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_gain: Array1<f64>,
    pub ln1_bias: Array1<f64>,
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub ln2_gain: Array1<f64>,
    pub ln2_bias: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Every trainable tensor of the encoder. The same type holds gradients and
/// optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub token_embedding: Array2<f64>,
    pub position_embedding: Array2<f64>,
    pub summary: Array1<f64>,
    pub layers: Vec<LayerParams>,
    pub final_gain: Array1<f64>,
    pub final_bias: Array1<f64>,
    pub doc_w: Array2<f64>,
    pub doc_b: Array1<f64>,
    pub tok_w: Array2<f64>,
    pub tok_b: Array1<f64>,
}

macro_rules! tensor_list {
    ($p:expr, $slice:ident, $iter:ident) => {{
        let p = $p;
        let mut out = Vec::with_capacity(10 + 16 * p.layers.len());
        out.push(("token_embedding".to_string(), p.token_embedding.shape().to_vec(), p.token_embedding.$slice().unwrap()));
        out.push(("position_embedding".to_string(), p.position_embedding.shape().to_vec(), p.position_embedding.$slice().unwrap()));
        out.push(("summary".to_string(), p.summary.shape().to_vec(), p.summary.$slice().unwrap()));
        for (l, lp) in p.layers.$iter().enumerate() {
            out.push((format!("layers.{l}.ln1_gain"), lp.ln1_gain.shape().to_vec(), lp.ln1_gain.$slice().unwrap()));
            out.push((format!("layers.{l}.ln1_bias"), lp.ln1_bias.shape().to_vec(), lp.ln1_bias.$slice().unwrap()));
            out.push((format!("layers.{l}.wq"), lp.wq.shape().to_vec(), lp.wq.$slice().unwrap()));
            out.push((format!("layers.{l}.bq"), lp.bq.shape().to_vec(), lp.bq.$slice().unwrap()));
            out.push((format!("layers.{l}.wk"), lp.wk.shape().to_vec(), lp.wk.$slice().unwrap()));
            out.push((format!("layers.{l}.bk"), lp.bk.shape().to_vec(), lp.bk.$slice().unwrap()));
            out.push((format!("layers.{l}.wv"), lp.wv.shape().to_vec(), lp.wv.$slice().unwrap()));
            out.push((format!("layers.{l}.bv"), lp.bv.shape().to_vec(), lp.bv.$slice().unwrap()));
            out.push((format!("layers.{l}.wo"), lp.wo.shape().to_vec(), lp.wo.$slice().unwrap()));
            out.push((format!("layers.{l}.bo"), lp.bo.shape().to_vec(), lp.bo.$slice().unwrap()));
            out.push((format!("layers.{l}.ln2_gain"), lp.ln2_gain.shape().to_vec(), lp.ln2_gain.$slice().unwrap()));
            out.push((format!("layers.{l}.ln2_bias"), lp.ln2_bias.shape().to_vec(), lp.ln2_bias.$slice().unwrap()));
            out.push((format!("layers.{l}.w1"), lp.w1.shape().to_vec(), lp.w1.$slice().unwrap()));
            out.push((format!("layers.{l}.b1"), lp.b1.shape().to_vec(), lp.b1.$slice().unwrap()));
            out.push((format!("layers.{l}.w2"), lp.w2.shape().to_vec(), lp.w2.$slice().unwrap()));
            out.push((format!("layers.{l}.b2"), lp.b2.shape().to_vec(), lp.b2.$slice().unwrap()));
        }
        out.push(("final_gain".to_string(), p.final_gain.shape().to_vec(), p.final_gain.$slice().unwrap()));
        out.push(("final_bias".to_string(), p.final_bias.shape().to_vec(), p.final_bias.$slice().unwrap()));
        out.push(("doc_w".to_string(), p.doc_w.shape().to_vec(), p.doc_w.$slice().unwrap()));
        out.push(("doc_b".to_string(), p.doc_b.shape().to_vec(), p.doc_b.$slice().unwrap()));
        out.push(("tok_w".to_string(), p.tok_w.shape().to_vec(), p.tok_w.$slice().unwrap()));
        out.push(("tok_b".to_string(), p.tok_b.shape().to_vec(), p.tok_b.$slice().unwrap()));
        out
    }};
}

/// Tensors that belong to the embedding group of the optimizer.
pub const EMBEDDING_TENSORS: [&str; 3] = ["token_embedding", "position_embedding", "summary"];

impl Params {
    fn build(config: &ModelConfig, mut weight: impl FnMut() -> f64, one: f64) -> Self {
        let (v, d, h, c) = (config.vocab_size, config.dim, config.hidden, config.num_classes);
        let token_embedding = Array2::from_shape_fn((v, d), |_| weight());
        let position_embedding = Array2::from_shape_fn((config.max_len + 1, d), |_| weight());
        let summary = Array1::from_shape_fn(d, |_| weight());
        let layers = (0..config.layers)
            .map(|_| LayerParams {
                ln1_gain: Array1::from_elem(d, one),
                ln1_bias: Array1::zeros(d),
                wq: Array2::from_shape_fn((d, d), |_| weight()),
                bq: Array1::zeros(d),
                wk: Array2::from_shape_fn((d, d), |_| weight()),
                bk: Array1::zeros(d),
                wv: Array2::from_shape_fn((d, d), |_| weight()),
                bv: Array1::zeros(d),
                wo: Array2::from_shape_fn((d, d), |_| weight()),
                bo: Array1::zeros(d),
                ln2_gain: Array1::from_elem(d, one),
                ln2_bias: Array1::zeros(d),
                w1: Array2::from_shape_fn((d, h), |_| weight()),
                b1: Array1::zeros(h),
                w2: Array2::from_shape_fn((h, d), |_| weight()),
                b2: Array1::zeros(d),
            })
            .collect();
        Self {
            token_embedding,
            position_embedding,
            summary,
            layers,
            final_gain: Array1::from_elem(d, one),
            final_bias: Array1::zeros(d),
            doc_w: Array2::from_shape_fn((d, c), |_| weight()),
            doc_b: Array1::zeros(c),
            tok_w: Array2::from_shape_fn((d, v), |_| weight()),
            tok_b: Array1::zeros(v),
        }
    }

    pub fn zeros(config: &ModelConfig) -> Self {
        Self::build(config, || 0.0, 0.0)
    }

    /// Weights uniform in ±1/√d, layer-norm gains 1, biases 0.
    pub fn random(config: &ModelConfig, rng: &mut Rng) -> Self {
        let bound = 1.0 / (config.dim as f64).sqrt();
        Self::build(config, || rng.gen_range(-bound..bound), 1.0)
    }

    /// `(name, shape, values)` for every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        tensor_list!(self, as_slice, iter)
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, Vec<usize>, &mut [f64])> {
        tensor_list!(self, as_slice_mut, iter_mut)
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.2.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.2.iter().all(|x| x.is_finite()))
    }

    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        for ((_, _, a), (_, _, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }
}
