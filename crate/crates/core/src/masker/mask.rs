use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{is_reserved, Document, TokenId, MASK};
use crate::error::{Error, Result};
use crate::keywords::KeywordSet;
use crate::model::{token_cross_entropy, uniform_kl, EncoderModel};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    Keyword,
    Context,
}

impl MaskKind {
    fn name(self) -> &'static str {
        match self {
            MaskKind::Keyword => "keyword",
            MaskKind::Context => "context",
        }
    }
}

/// Positions chosen for masking in one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPlan {
    pub kind: MaskKind,
    /// Ascending indices into the document.
    pub positions: Vec<usize>,
    pub probability: f64,
    pub seed: u64,
    /// Set when the document has no keyword occurrence at all.
    pub skip_mkr: bool,
}

fn sample(doc: &Document, eligible: impl Fn(TokenId) -> bool, prob: f64, seed: u64) -> Vec<usize> {
    debug_assert!((0.0..=1.0).contains(&prob));
    let mut rng = rng::stream(seed, &[]);
    doc.token_ids
        .iter()
        .enumerate()
        .filter(|&(_, &t)| !is_reserved(t) && eligible(t))
        // one draw per eligible position keeps streams aligned across p
        .filter(|_| rng.gen::<f64>() < prob)
        .map(|(i, _)| i)
        .collect()
}

/// Picks each keyword occurrence independently with probability `p`.
pub fn sample_keyword_mask(doc: &Document, keywords: &KeywordSet, p: f64, seed: u64) -> MaskPlan {
    let skip_mkr = !doc.token_ids.iter().any(|&t| !is_reserved(t) && keywords.contains(t));
    MaskPlan {
        kind: MaskKind::Keyword,
        positions: sample(doc, |t| keywords.contains(t), p, seed),
        probability: p,
        seed,
        skip_mkr,
    }
}

/// Picks each non-keyword position independently with probability `q`.
pub fn sample_context_mask(doc: &Document, keywords: &KeywordSet, q: f64, seed: u64) -> MaskPlan {
    MaskPlan {
        kind: MaskKind::Context,
        positions: sample(doc, |t| !keywords.contains(t), q, seed),
        probability: q,
        seed,
        skip_mkr: false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedDocument {
    pub original: Document,
    pub masked_ids: Vec<TokenId>,
    /// `(position, original id)` for every masked keyword; empty for context masks.
    pub targets: Vec<(usize, TokenId)>,
    pub kind: MaskKind,
    pub skip_mkr: bool,
}

pub fn apply_mask(doc: &Document, plan: &MaskPlan) -> MaskedDocument {
    let mut masked_ids = doc.token_ids.clone();
    for &i in &plan.positions {
        masked_ids[i] = MASK;
    }
    let targets = match plan.kind {
        MaskKind::Keyword => plan.positions.iter().map(|&i| (i, doc.token_ids[i])).collect(),
        MaskKind::Context => Vec::new(),
    };
    MaskedDocument {
        original: doc.clone(),
        masked_ids,
        targets,
        kind: plan.kind,
        skip_mkr: plan.skip_mkr,
    }
}

fn expect_kind(masked: &MaskedDocument, kind: MaskKind) -> Result<()> {
    if masked.kind != kind {
        return Err(Error::WrongMaskKind {
            expected: kind.name(),
            actual: masked.kind.name(),
        });
    }
    Ok(())
}

/// Summed token cross-entropy of the original keywords at the masked
/// positions (evaluation mode).
pub fn mkr_loss(model: &EncoderModel, masked: &MaskedDocument) -> Result<f64> {
    expect_kind(masked, MaskKind::Keyword)?;
    if masked.skip_mkr || masked.targets.is_empty() {
        return Ok(0.0);
    }
    let positions: Vec<usize> = masked.targets.iter().map(|t| t.0).collect();
    let logits = model.token_logits_at(&masked.masked_ids, &positions)?;
    Ok(masked
        .targets
        .iter()
        .enumerate()
        .map(|(j, &(_, v))| token_cross_entropy(logits.row(j), v as usize).0)
        .sum())
}

/// KL divergence from the uniform prediction to the prediction on the
/// context-masked document (evaluation mode).
pub fn mer_loss(model: &EncoderModel, masked: &MaskedDocument) -> Result<f64> {
    expect_kind(masked, MaskKind::Context)?;
    let logits = model.doc_logits(&masked.masked_ids)?;
    Ok(uniform_kl(logits.view(), model.config.head_mode).0)
}
