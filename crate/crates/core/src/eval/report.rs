use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CrossDomainEvaluation, DetectionMetrics, SubstitutionEvaluation};

/// Everything measured for one trained model. Sections that were not
/// evaluated stay `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub method: String,
    pub seed: u64,
    pub config_hash: String,
    pub detection: Option<DetectionMetrics>,
    /// In-distribution test accuracy.
    pub classification_accuracy: Option<f64>,
    pub cross_domain: Option<CrossDomainEvaluation>,
    pub substitution: Option<SubstitutionEvaluation>,
    pub conventions: BTreeMap<String, String>,
}

pub const REPORT_CSV_HEADER: [&str; 14] = [
    "method",
    "seed",
    "config_hash",
    "auroc",
    "eer",
    "detection_accuracy",
    "tnr_at_tpr80",
    "classification_accuracy",
    "id_accuracy",
    "cross_accuracy",
    "gap",
    "clean_accuracy",
    "attacked_accuracy",
    "substitution_drop",
];

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ReliabilityReport {
    pub fn new(method: impl Into<String>, seed: u64, config_hash: impl Into<String>) -> Self {
        let mut conventions = BTreeMap::new();
        conventions.insert("positive_class".into(), "in-distribution".into());
        conventions.insert("confidence".into(), "maximum softmax or sigmoid output".into());
        conventions.insert("detection_accuracy".into(), "max over thresholds of (TPR + TNR) / 2".into());
        conventions.insert("eer".into(), "(FPR + FNR) / 2 at the threshold minimizing |FPR - FNR|".into());
        conventions.insert("thresholds".into(), "midpoints of sorted unique scores plus -inf and +inf".into());
        conventions.insert("classification_accuracy".into(), "in-distribution test split".into());
        Self {
            method: method.into(),
            seed,
            config_hash: config_hash.into(),
            detection: None,
            classification_accuracy: None,
            cross_domain: None,
            substitution: None,
            conventions,
        }
    }

    /// Values in the order of [`REPORT_CSV_HEADER`]; missing sections give
    /// empty cells.
    pub fn csv_row(&self) -> Vec<String> {
        let d = self.detection;
        let x = self.cross_domain;
        let s = self.substitution;
        vec![
            self.method.clone(),
            self.seed.to_string(),
            self.config_hash.clone(),
            cell(d.map(|d| d.auroc)),
            cell(d.map(|d| d.eer)),
            cell(d.map(|d| d.detection_accuracy)),
            cell(d.map(|d| d.tnr_at_tpr80)),
            cell(self.classification_accuracy),
            cell(x.map(|x| x.id_accuracy)),
            cell(x.map(|x| x.cross_accuracy)),
            cell(x.map(|x| x.gap)),
            cell(s.map(|s| s.clean_accuracy)),
            cell(s.map(|s| s.attacked_accuracy)),
            cell(s.map(|s| s.drop)),
        ]
    }
}
