//! Reliability evaluation: OOD detection, cross-domain accuracy, keyword
//! substitution and embedding export.

mod attack;
mod metrics;
mod report;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::LabeledCorpus;
use crate::error::{Error, Result};
use crate::model::EncoderModel;

pub use attack::keyword_substitution_attack;
pub use metrics::{
    auroc, detection_accuracy, detection_metrics, eer, tnr_at_tpr, DetectionMetrics, ScoredSample, Sweep, SweepPoint,
};
pub use report::{ReliabilityReport, REPORT_CSV_HEADER};

/// Scores every document of `corpus` with the model's confidence.
pub fn score_corpus(model: &EncoderModel, corpus: &LabeledCorpus, in_distribution: bool) -> Result<Vec<ScoredSample>> {
    corpus
        .documents()
        .iter()
        .map(|d| {
            let p = model.predict(&d.token_ids)?;
            Ok(if in_distribution {
                ScoredSample::id(p.confidence, p.label, d.label)
            } else {
                ScoredSample::ood(p.confidence, p.label)
            })
        })
        .collect()
}

pub fn accuracy(model: &EncoderModel, corpus: &LabeledCorpus) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut correct = 0;
    for d in corpus.documents() {
        if model.predict(&d.token_ids)?.label == d.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / corpus.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OodEvaluation {
    pub detection: DetectionMetrics,
    /// Accuracy on the in-distribution test corpus.
    pub id_accuracy: f64,
}

pub fn evaluate_ood(model: &EncoderModel, id: &LabeledCorpus, ood: &LabeledCorpus) -> Result<OodEvaluation> {
    if id.is_empty() || ood.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let id_scores = score_corpus(model, id, true)?;
    let correct = id_scores.iter().filter(|s| s.label == Some(s.predicted)).count();
    let mut samples = id_scores;
    samples.extend(score_corpus(model, ood, false)?);
    Ok(OodEvaluation {
        detection: detection_metrics(&samples)?,
        id_accuracy: correct as f64 / id.len() as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossDomainEvaluation {
    pub id_accuracy: f64,
    pub cross_accuracy: f64,
    /// `id_accuracy - cross_accuracy`.
    pub gap: f64,
}

pub fn evaluate_cross_domain(
    model: &EncoderModel,
    train_domain_test: &LabeledCorpus,
    other_domain_test: &LabeledCorpus,
) -> Result<CrossDomainEvaluation> {
    if train_domain_test.num_classes() != other_domain_test.num_classes() {
        return Err(Error::InvalidConfig(format!(
            "label spaces differ: {} vs {} classes",
            train_domain_test.num_classes(),
            other_domain_test.num_classes()
        )));
    }
    let id_accuracy = accuracy(model, train_domain_test)?;
    let cross_accuracy = accuracy(model, other_domain_test)?;
    Ok(CrossDomainEvaluation {
        id_accuracy,
        cross_accuracy,
        gap: id_accuracy - cross_accuracy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubstitutionEvaluation {
    pub clean_accuracy: f64,
    pub attacked_accuracy: f64,
    /// `clean_accuracy - attacked_accuracy`.
    pub drop: f64,
}

pub fn evaluate_substitution(
    model: &EncoderModel,
    clean: &LabeledCorpus,
    attacked: &LabeledCorpus,
) -> Result<SubstitutionEvaluation> {
    let clean_accuracy = accuracy(model, clean)?;
    let attacked_accuracy = accuracy(model, attacked)?;
    Ok(SubstitutionEvaluation {
        clean_accuracy,
        attacked_accuracy,
        drop: clean_accuracy - attacked_accuracy,
    })
}

/// Writes one CSV row per document: `id,label,domain,e0,...,e{d-1}`.
pub fn export_embeddings(model: &EncoderModel, corpus: &LabeledCorpus, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["id".to_owned(), "label".to_owned(), "domain".to_owned()];
    header.extend((0..model.config.dim).map(|i| format!("e{i}")));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (i, d) in corpus.documents().iter().enumerate() {
        let p = model.predict(&d.token_ids)?;
        let mut row = vec![i.to_string(), d.label.to_string(), d.domain.clone().unwrap_or_default()];
        row.extend(p.embedding.iter().map(f64::to_string));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}
