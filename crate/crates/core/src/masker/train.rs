use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::mask::{apply_mask, sample_context_mask, sample_keyword_mask};
use crate::corpus::{Document, LabeledCorpus};
use crate::error::{Error, Result};
use crate::keywords::{attention_scores, select_keywords, KeywordSet, Scheme, SelectionMode};
use crate::model::{
    Adam, AdamConfig, EncoderModel, KeywordView, LossBreakdown, LossSpec, ModelConfig, TrainingSample,
};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda_mkr: f64,
    pub lambda_mer: f64,
    /// Keyword masking probability.
    pub p: f64,
    /// Context masking probability.
    pub q: f64,
    /// K = k_multiplier * C.
    pub k_multiplier: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub embedding_lr_multiplier: f64,
    pub seed: u64,
    pub keyword_scheme: Scheme,
    pub keyword_mode: SelectionMode,
    /// Start MASKER from the vanilla model's weights instead of a fresh init.
    pub share_init: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_mkr: 0.001,
            lambda_mer: 0.001,
            p: 0.5,
            q: 0.9,
            k_multiplier: 10,
            epochs: 10,
            batch_size: 16,
            lr: 1e-3,
            embedding_lr_multiplier: 1.0,
            seed: 0,
            keyword_scheme: Scheme::Attention,
            keyword_mode: SelectionMode::ClassAgnostic,
            share_init: false,
        }
    }
}

impl TrainConfig {
    /// Defaults for the cross-domain setting (smaller MER weight).
    pub fn cross_domain() -> Self {
        Self {
            lambda_mer: 0.0001,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if !(0.0..=1.0).contains(&self.p) || !(0.0..=1.0).contains(&self.q) {
            return bad("p and q must lie in [0, 1]");
        }
        if !(self.lambda_mkr >= 0.0 && self.lambda_mer >= 0.0) {
            return bad("loss weights must be non-negative");
        }
        if self.k_multiplier == 0 {
            return bad("k_multiplier must be at least 1");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if !(self.lr > 0.0 && self.embedding_lr_multiplier >= 0.0) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }

    pub fn num_keywords(&self, num_classes: usize) -> usize {
        self.k_multiplier * num_classes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub ce: f64,
    pub mkr: f64,
    pub mer: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: EncoderModel,
    pub log: Vec<StepLog>,
}

const KEYWORD_PLAN: u64 = 1;
const CONTEXT_PLAN: u64 = 2;

/// Draws the masked views of corpus document `index` for optimizer step
/// `step`. Without keywords the sample carries the clean document only.
pub fn build_sample(
    doc: &Document,
    index: usize,
    keywords: Option<&KeywordSet>,
    cfg: &TrainConfig,
    step: usize,
) -> TrainingSample {
    let mask_seed = rng::derive_seed(cfg.seed, &[rng::tag("mask"), step as u64, index as u64]);
    let (keyword_view, context_view) = match keywords {
        None => (None, None),
        Some(kw) => {
            let plan = sample_keyword_mask(doc, kw, cfg.p, rng::derive_seed(mask_seed, &[KEYWORD_PLAN]));
            let masked = apply_mask(doc, &plan);
            let keyword_view = (!plan.skip_mkr).then_some(KeywordView {
                tokens: masked.masked_ids,
                targets: masked.targets,
            });
            let plan = sample_context_mask(doc, kw, cfg.q, rng::derive_seed(mask_seed, &[CONTEXT_PLAN]));
            (keyword_view, Some(apply_mask(doc, &plan).masked_ids))
        }
    };
    TrainingSample {
        tokens: doc.token_ids.clone(),
        label: doc.label,
        keyword_view,
        context_view,
        dropout_seed: rng::derive_seed(cfg.seed, &[rng::tag("dropout"), step as u64, index as u64]),
    }
}

fn loss_spec(keywords: Option<&KeywordSet>, cfg: &TrainConfig) -> LossSpec {
    match keywords {
        None => LossSpec::cross_entropy_only(),
        Some(_) => LossSpec {
            ce: 1.0,
            mkr: cfg.lambda_mkr,
            mer: cfg.lambda_mer,
        },
    }
}

/// `CE + lambda_mkr * MKR + lambda_mer * MER` over the documents at
/// `indices`, each term a batch mean, with the masks of step `step`.
/// Evaluation mode, so the value is deterministic.
pub fn total_loss(
    model: &EncoderModel,
    corpus: &LabeledCorpus,
    indices: &[usize],
    keywords: &KeywordSet,
    cfg: &TrainConfig,
    step: usize,
) -> Result<LossBreakdown> {
    let batch: Vec<TrainingSample> = indices
        .iter()
        .map(|&i| build_sample(&corpus.documents()[i], i, Some(keywords), cfg, step))
        .collect();
    model.loss(&batch, &loss_spec(Some(keywords), cfg))
}

fn check_compatible(corpus: &LabeledCorpus, config: &ModelConfig) -> Result<()> {
    if corpus.num_classes() != config.num_classes {
        return Err(Error::InvalidConfig(format!(
            "corpus has {} classes, model {}",
            corpus.num_classes(),
            config.num_classes
        )));
    }
    if corpus.vocab().len() != config.vocab_size {
        return Err(Error::InvalidConfig(format!(
            "corpus vocabulary has {} tokens, model {}",
            corpus.vocab().len(),
            config.vocab_size
        )));
    }
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(())
}

fn run(
    mut model: EncoderModel,
    corpus: &LabeledCorpus,
    keywords: Option<&KeywordSet>,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    cfg.validate()?;
    check_compatible(corpus, &model.config)?;
    let spec = loss_spec(keywords, cfg);
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            embedding_lr_multiplier: cfg.embedding_lr_multiplier,
            ..Default::default()
        },
        &model.config,
    );
    let docs = corpus.documents();
    let mut log = Vec::new();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..docs.len()).collect();
        order.shuffle(&mut rng::stream(cfg.seed, &[rng::tag("shuffle"), epoch as u64]));
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<TrainingSample> = chunk
                .iter()
                .map(|&i| build_sample(&docs[i], i, keywords, cfg, step))
                .collect();
            let (b, grads) = model.batch_gradients(&batch, &spec, true)?;
            if !b.total.is_finite() || !grads.is_finite() {
                return Err(Error::Divergence { step, loss: b.total });
            }
            adam.step(&mut model.params, &grads);
            if !model.params.is_finite() {
                return Err(Error::Divergence { step, loss: b.total });
            }
            log.push(StepLog {
                step,
                epoch,
                ce: b.ce,
                mkr: b.mkr,
                mer: b.mer,
                total: b.total,
            });
            step += 1;
        }
    }
    Ok(TrainedModel { model, log })
}

/// Cross-entropy training from a fresh initialization.
pub fn train_vanilla(corpus: &LabeledCorpus, model_config: &ModelConfig, cfg: &TrainConfig) -> Result<TrainedModel> {
    run(EncoderModel::init(model_config.clone())?, corpus, None, cfg)
}

/// Regularized training from a fresh initialization.
pub fn train_masker(
    corpus: &LabeledCorpus,
    keywords: &KeywordSet,
    model_config: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    run(EncoderModel::init(model_config.clone())?, corpus, Some(keywords), cfg)
}

/// Regularized training starting from `init` (e.g. the vanilla model).
pub fn train_masker_from(
    init: EncoderModel,
    corpus: &LabeledCorpus,
    keywords: &KeywordSet,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    run(init, corpus, Some(keywords), cfg)
}

/// Keywords ranked by the attention `model` pays to them over `corpus`.
pub fn attention_keywords(
    model: &EncoderModel,
    corpus: &LabeledCorpus,
    k: usize,
    mode: SelectionMode,
) -> Result<KeywordSet> {
    let traces = corpus
        .documents()
        .iter()
        .map(|d| model.attention_trace(&d.token_ids))
        .collect::<Result<Vec<_>>>()?;
    let table = attention_scores(corpus, &traces)?;
    select_keywords(&table, k, mode, corpus)
}

/// Per-epoch means of the step log.
pub fn epoch_means(log: &[StepLog]) -> Vec<StepLog> {
    let mut out: Vec<(StepLog, usize)> = Vec::new();
    for s in log {
        match out.last_mut() {
            Some((acc, n)) if acc.epoch == s.epoch => {
                acc.ce += s.ce;
                acc.mkr += s.mkr;
                acc.mer += s.mer;
                acc.total += s.total;
                acc.step = s.step;
                *n += 1;
            }
            _ => out.push((*s, 1)),
        }
    }
    out.into_iter()
        .map(|(s, n)| {
            let n = n as f64;
            StepLog {
                ce: s.ce / n,
                mkr: s.mkr / n,
                mer: s.mer / n,
                total: s.total / n,
                ..s
            }
        })
        .collect()
}
