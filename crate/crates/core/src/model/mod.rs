//! Small bi-directional attention encoder with a document classifier and a
//! token-wise classifier sharing every encoder layer.

mod adam;
mod checkpoint;
mod encoder;
mod loss;
mod params;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::corpus::{TokenId, DEFAULT_MAX_LEN};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use loss::{
    class_probabilities, doc_cross_entropy, log_softmax, sigmoid, softmax, token_cross_entropy,
    uniform_kl, HeadMode,
};
pub use params::{LayerParams, Params, EMBEDDING_TENSORS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub num_classes: usize,
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub max_len: usize,
    pub head_mode: HeadMode,
    pub dropout: f64,
    /// `[PAD]` and `[MASK]` positions are never attended to, so a masked
    /// document is encoded as the document with those tokens removed.
    pub hide_masked_keys: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 0,
            num_classes: 2,
            dim: 64,
            layers: 2,
            heads: 2,
            hidden: 128,
            max_len: DEFAULT_MAX_LEN,
            head_mode: HeadMode::OneVsRest,
            dropout: 0.1,
            hide_masked_keys: true,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("num_classes", self.num_classes),
            ("dim", self.dim),
            ("layers", self.layers),
            ("heads", self.heads),
            ("hidden", self.hidden),
            ("max_len", self.max_len),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be positive")));
        }
        if !self.dim.is_multiple_of(self.heads) {
            return Err(Error::InvalidConfig(format!(
                "dim {} not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// Closed-form parameter count.
    pub fn num_parameters(&self) -> usize {
        let (v, d, h, c) = (self.vocab_size, self.dim, self.hidden, self.num_classes);
        let per_layer = 2 * d + 4 * (d * d + d) + 2 * d + (d * h + h) + (h * d + d);
        v * d + (self.max_len + 1) * d + d + self.layers * per_layer + 2 * d + (d * c + c) + (d * v + v)
    }
}

/// Attention paid by the document embedding to each input token
/// (last layer, averaged over heads); sums to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardResult {
    pub doc_embedding: Array1<f64>,
    /// One row per input token.
    pub token_embeddings: Array2<f64>,
    pub doc_logits: Array1<f64>,
    /// One row per input token, |V| columns.
    pub token_logits: Array2<f64>,
    pub attention: AttentionTrace,
    pub head_mode: HeadMode,
}

impl ForwardResult {
    pub fn probabilities(&self) -> Array1<f64> {
        class_probabilities(self.doc_logits.view(), self.head_mode)
    }

    pub fn predicted_label(&self) -> usize {
        argmax(self.doc_logits.view())
    }
}

/// Document loss: `-ln p_y` (softmax) or summed binary cross-entropy (1-vs-rest).
pub fn cross_entropy_doc(result: &ForwardResult, label: usize) -> f64 {
    doc_cross_entropy(result.doc_logits.view(), label, result.head_mode).0
}

/// Highest softmax probability or highest sigmoid output.
pub fn confidence(result: &ForwardResult) -> f64 {
    max_value(result.probabilities().view())
}

pub(crate) fn max_value(v: ndarray::ArrayView1<f64>) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub(crate) fn argmax(v: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Document-level prediction without the token head.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub label: usize,
    pub confidence: f64,
    pub embedding: Vec<f64>,
}

/// Input of the keyword-reconstruction pass: the masked sequence and the
/// original token at each masked position.
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordView {
    pub tokens: Vec<TokenId>,
    pub targets: Vec<(usize, TokenId)>,
}

/// One document together with its optional masked views.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub tokens: Vec<TokenId>,
    pub label: usize,
    /// Absent for documents without keywords.
    pub keyword_view: Option<KeywordView>,
    pub context_view: Option<Vec<TokenId>>,
    /// Seed for the dropout streams of this sample's passes.
    pub dropout_seed: u64,
}

/// Weights of the three loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub ce: f64,
    pub mkr: f64,
    pub mer: f64,
}

impl LossSpec {
    pub fn cross_entropy_only() -> Self {
        Self {
            ce: 1.0,
            mkr: 0.0,
            mer: 0.0,
        }
    }
}

/// Batch means of each term and their weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce: f64,
    pub mkr: f64,
    pub mer: f64,
    pub total: f64,
}

const PASS_CLEAN: u64 = 1;
const PASS_KEYWORD: u64 = 2;
const PASS_CONTEXT: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub config: ModelConfig,
    pub params: Params,
}

impl EncoderModel {
    /// Deterministic random initialization from `config.seed`.
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(config.seed, &[rng::tag("init")]);
        let params = Params::random(&config, &mut rng);
        Ok(Self { config, params })
    }

    fn check_len(&self, tokens: &[TokenId]) -> Result<()> {
        if tokens.len() > self.config.max_len {
            return Err(Error::InputTooLong {
                len: tokens.len(),
                max: self.config.max_len,
            });
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(Error::InvalidVocabulary(format!(
                "token id {bad} outside model vocabulary of size {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    /// Full forward pass. With `dropout` set the pass runs in training mode.
    pub fn forward_with(&self, tokens: &[TokenId], dropout: Option<&mut Rng>) -> Result<ForwardResult> {
        self.check_len(tokens)?;
        let cache = encoder::forward(&self.params, &self.config, tokens, dropout);
        let positions: Vec<usize> = (0..tokens.len()).collect();
        Ok(ForwardResult {
            doc_embedding: cache.z.row(0).to_owned(),
            token_embeddings: cache.z.slice(ndarray::s![1.., ..]).to_owned(),
            doc_logits: encoder::doc_logits(&self.params, &cache),
            token_logits: encoder::token_logits(&self.params, &cache, &positions),
            attention: AttentionTrace {
                weights: cache.summary_attention(),
            },
            head_mode: self.config.head_mode,
        })
    }

    /// Evaluation-mode forward pass (no dropout, deterministic).
    pub fn forward(&self, tokens: &[TokenId]) -> Result<ForwardResult> {
        self.forward_with(tokens, None)
    }

    pub fn predict(&self, tokens: &[TokenId]) -> Result<Prediction> {
        self.check_len(tokens)?;
        let cache = encoder::forward(&self.params, &self.config, tokens, None);
        let logits = encoder::doc_logits(&self.params, &cache);
        let probs = class_probabilities(logits.view(), self.config.head_mode);
        Ok(Prediction {
            label: argmax(logits.view()),
            confidence: max_value(probs.view()),
            probabilities: probs.to_vec(),
            embedding: cache.z.row(0).to_vec(),
        })
    }

    pub fn attention_trace(&self, tokens: &[TokenId]) -> Result<AttentionTrace> {
        self.check_len(tokens)?;
        let cache = encoder::forward(&self.params, &self.config, tokens, None);
        Ok(AttentionTrace {
            weights: cache.summary_attention(),
        })
    }

    /// Token-head logits at the given document positions (eval mode).
    pub fn token_logits_at(&self, tokens: &[TokenId], positions: &[usize]) -> Result<Array2<f64>> {
        self.check_len(tokens)?;
        let cache = encoder::forward(&self.params, &self.config, tokens, None);
        Ok(encoder::token_logits(&self.params, &cache, positions))
    }

    /// Document logits (eval mode).
    pub fn doc_logits(&self, tokens: &[TokenId]) -> Result<Array1<f64>> {
        self.check_len(tokens)?;
        let cache = encoder::forward(&self.params, &self.config, tokens, None);
        Ok(encoder::doc_logits(&self.params, &cache))
    }

    /// Exact gradients of `spec.ce * CE + spec.mkr * MKR + spec.mer * MER`,
    /// each term averaged over the batch, in evaluation mode.
    pub fn gradients(&self, batch: &[TrainingSample], spec: &LossSpec) -> Result<(LossBreakdown, Params)> {
        self.batch_gradients(batch, spec, false)
    }

    /// As [`gradients`](Self::gradients); with `train` set every pass draws
    /// its dropout masks from a stream keyed by the sample's seed.
    pub fn batch_gradients(
        &self,
        batch: &[TrainingSample],
        spec: &LossSpec,
        train: bool,
    ) -> Result<(LossBreakdown, Params)> {
        let mut grads = Params::zeros(&self.config);
        let mut sums = LossBreakdown::default();
        if batch.is_empty() {
            return Ok((sums, grads));
        }
        let scale = 1.0 / batch.len() as f64;
        let mode = self.config.head_mode;
        for sample in batch {
            let stream = |pass: u64| train.then(|| rng::stream(sample.dropout_seed, &[pass]));

            // clean document, L_CE
            self.check_len(&sample.tokens)?;
            if sample.label >= self.config.num_classes {
                return Err(Error::LabelOutOfRange {
                    label: sample.label,
                    num_classes: self.config.num_classes,
                });
            }
            let mut rng = stream(PASS_CLEAN);
            let cache = encoder::forward(&self.params, &self.config, &sample.tokens, rng.as_mut());
            let logits = encoder::doc_logits(&self.params, &cache);
            let (ce, g) = doc_cross_entropy(logits.view(), sample.label, mode);
            sums.ce += ce;
            if spec.ce != 0.0 {
                let g = g * (spec.ce * scale);
                encoder::backward(&self.params, &self.config, &cache, Some(&g), None, &mut grads);
            }

            // keyword-masked view, L_MKR
            if let Some(view) = sample.keyword_view.as_ref().filter(|v| !v.targets.is_empty()) {
                self.check_len(&view.tokens)?;
                let mut rng = stream(PASS_KEYWORD);
                let cache = encoder::forward(&self.params, &self.config, &view.tokens, rng.as_mut());
                let positions: Vec<usize> = view.targets.iter().map(|t| t.0).collect();
                let logits = encoder::token_logits(&self.params, &cache, &positions);
                let mut d_tok = Array2::zeros(logits.raw_dim());
                for (j, &(_, target)) in view.targets.iter().enumerate() {
                    let (l, g) = token_cross_entropy(logits.row(j), target as usize);
                    sums.mkr += l;
                    d_tok.row_mut(j).assign(&(g * (spec.mkr * scale)));
                }
                if spec.mkr != 0.0 {
                    encoder::backward(&self.params, &self.config, &cache, None, Some((&positions, &d_tok)), &mut grads);
                }
            }

            // context-masked view, L_MER
            if let Some(tokens) = &sample.context_view {
                self.check_len(tokens)?;
                let mut rng = stream(PASS_CONTEXT);
                let cache = encoder::forward(&self.params, &self.config, tokens, rng.as_mut());
                let logits = encoder::doc_logits(&self.params, &cache);
                let (l, g) = uniform_kl(logits.view(), mode);
                sums.mer += l;
                if spec.mer != 0.0 {
                    let g = g * (spec.mer * scale);
                    encoder::backward(&self.params, &self.config, &cache, Some(&g), None, &mut grads);
                }
            }
        }
        sums.ce *= scale;
        sums.mkr *= scale;
        sums.mer *= scale;
        sums.total = spec.ce * sums.ce + spec.mkr * sums.mkr + spec.mer * sums.mer;
        Ok((sums, grads))
    }

    /// Loss value only (evaluation mode).
    pub fn loss(&self, batch: &[TrainingSample], spec: &LossSpec) -> Result<LossBreakdown> {
        let zero = LossSpec {
            ce: 0.0,
            mkr: 0.0,
            mer: 0.0,
        };
        let (mut b, _) = self.batch_gradients(batch, &zero, false)?;
        b.total = spec.ce * b.ce + spec.mkr * b.mkr + spec.mer * b.mer;
        Ok(b)
    }
}
