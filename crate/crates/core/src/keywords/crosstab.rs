use serde::{Deserialize, Serialize};

use super::KeywordSet;
use crate::corpus::LabeledCorpus;

pub const CROSSTAB_CONVENTION: &str = "fraction of target documents containing at least one source keyword";

/// Keyword frequency matrix: rows are keyword sources, columns targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossTab {
    pub sources: Vec<String>,
    pub targets: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub convention: String,
}

/// Entry `(s, t)` is the fraction of documents of target `t` that contain at
/// least one keyword of source `s`. Empty targets give 0.
pub fn keyword_crosstab(
    sources: &[(String, KeywordSet)],
    targets: &[(String, LabeledCorpus)],
) -> CrossTab {
    let values = sources
        .iter()
        .map(|(_, set)| {
            targets
                .iter()
                .map(|(_, corpus)| {
                    if corpus.is_empty() {
                        return 0.0;
                    }
                    let hits = corpus
                        .documents()
                        .iter()
                        .filter(|d| d.token_ids.iter().any(|&t| set.contains(t)))
                        .count();
                    hits as f64 / corpus.len() as f64
                })
                .collect()
        })
        .collect();
    CrossTab {
        sources: sources.iter().map(|(n, _)| n.clone()).collect(),
        targets: targets.iter().map(|(n, _)| n.clone()).collect(),
        values,
        convention: CROSSTAB_CONVENTION.to_owned(),
    }
}
