//! Keyword scoring and selection.
//!
//! Two scores are supported. The frequency score treats each class corpus as
//! one large document and takes the best TF-IDF over classes; the attention
//! score sums, over documents, the ℓ2-normalized attention a vanilla model's
//! document embedding pays to each token (averaged over the token's
//! occurrences within a document).

mod crosstab;
mod select;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{is_reserved, Document, LabeledCorpus, TokenId};
use crate::error::{Error, Result};
use crate::model::AttentionTrace;

pub use crosstab::{keyword_crosstab, CrossTab, CROSSTAB_CONVENTION};
pub use select::{
    document_keywords, keywords_by_class, load_keyword_set, save_keyword_set, select_keywords,
    KeywordEntry, KeywordFile, KeywordSet, SelectionMode,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Frequency,
    Attention,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Frequency => "frequency",
            Scheme::Attention => "attention",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeywordScoreTable {
    pub scheme: Scheme,
    /// Score of every scored (non-reserved, observed) token.
    pub scores: BTreeMap<TokenId, f64>,
    /// Per-class values before the reduction over classes, indexed by class.
    /// For the frequency scheme this is tf(t, X_c) * idf(t, D); for the
    /// attention scheme it is the attention sum restricted to D_c.
    pub per_class_scores: BTreeMap<TokenId, Vec<f64>>,
}

/// All tokens of one class-wise corpus concatenated, as counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassConcatDocument {
    pub class: usize,
    pub counts: HashMap<TokenId, usize>,
    pub total: usize,
}

impl ClassConcatDocument {
    pub fn from_documents<'a>(class: usize, docs: impl IntoIterator<Item = &'a Document>) -> Self {
        let mut counts = HashMap::new();
        let mut total = 0;
        for doc in docs {
            for &t in &doc.token_ids {
                *counts.entry(t).or_insert(0) += 1;
                total += 1;
            }
        }
        Self {
            class,
            counts,
            total,
        }
    }

    pub fn count(&self, t: TokenId) -> usize {
        self.counts.get(&t).copied().unwrap_or(0)
    }

    /// Largest count among scoreable (non-reserved) tokens.
    pub fn max_count(&self) -> usize {
        self.counts
            .iter()
            .filter(|(&t, _)| !is_reserved(t))
            .map(|(_, &n)| n)
            .max()
            .unwrap_or(0)
    }

    pub fn contains(&self, t: TokenId) -> bool {
        self.count(t) > 0
    }
}

/// One concatenated document per class, in class order.
pub fn class_documents(corpus: &LabeledCorpus) -> Vec<ClassConcatDocument> {
    corpus
        .class_indices()
        .into_iter()
        .enumerate()
        .map(|(c, idx)| {
            ClassConcatDocument::from_documents(c, idx.into_iter().map(|i| &corpus.documents()[i]))
        })
        .collect()
}

/// Augmented term frequency `0.5 + 0.5 * n_t / max_t' n_t'`.
pub fn term_frequency(t: TokenId, xc: &ClassConcatDocument) -> Result<f64> {
    let max = xc.max_count();
    if max == 0 {
        return Err(Error::EmptyClassDocument(xc.class));
    }
    Ok(0.5 + 0.5 * xc.count(t) as f64 / max as f64)
}

/// `ln(|D| / |{X in D : t in X}|)` over class documents.
pub fn inverse_document_frequency(t: TokenId, classes: &[ClassConcatDocument]) -> Result<f64> {
    let df = classes.iter().filter(|x| x.contains(t)).count();
    if df == 0 {
        return Err(Error::ZeroDocumentFrequency(t));
    }
    Ok((classes.len() as f64 / df as f64).ln())
}

/// Frequency-based score: max over classes of tf * idf.
pub fn frequency_scores(corpus: &LabeledCorpus) -> Result<KeywordScoreTable> {
    let c = corpus.num_classes();
    if c < 2 {
        return Err(Error::InvalidConfig(format!(
            "frequency scores need at least 2 classes, got {c}"
        )));
    }
    let classes = class_documents(corpus);
    if let Some(empty) = classes.iter().find(|x| x.max_count() == 0) {
        return Err(Error::EmptyClassDocument(empty.class));
    }
    let mut scores = BTreeMap::new();
    let mut per_class_scores = BTreeMap::new();
    for t in corpus.vocab().word_ids() {
        let idf = match inverse_document_frequency(t, &classes) {
            Ok(v) => v,
            Err(Error::ZeroDocumentFrequency(_)) => continue,
            Err(e) => return Err(e),
        };
        let per_class = classes
            .iter()
            .map(|x| term_frequency(t, x).map(|tf| tf * idf))
            .collect::<Result<Vec<_>>>()?;
        let best = per_class.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        scores.insert(t, best);
        per_class_scores.insert(t, per_class);
    }
    Ok(KeywordScoreTable {
        scheme: Scheme::Frequency,
        scores,
        per_class_scores,
    })
}

/// Contribution of one document to the attention score of each of its
/// tokens: `(1 / n_t) * sum_{i: t_i = t} a_i / ||a||`.
fn document_attention(doc: &Document, trace: &AttentionTrace) -> Result<Vec<(TokenId, f64)>> {
    if trace.weights.len() != doc.token_ids.len() {
        return Err(Error::LengthMismatch(format!(
            "attention trace has {} weights for a document of {} tokens",
            trace.weights.len(),
            doc.token_ids.len()
        )));
    }
    let norm = trace.weights.iter().map(|a| a * a).sum::<f64>().sqrt();
    // token -> (sum of normalized attention, occurrences), first-occurrence order
    let mut acc: Vec<(TokenId, f64, usize)> = Vec::new();
    for (&t, &a) in doc.token_ids.iter().zip(&trace.weights) {
        if is_reserved(t) {
            continue;
        }
        let w = if norm > 0.0 { a / norm } else { 0.0 };
        match acc.iter_mut().find(|e| e.0 == t) {
            Some(e) => {
                e.1 += w;
                e.2 += 1;
            }
            None => acc.push((t, w, 1)),
        }
    }
    Ok(acc.into_iter().map(|(t, s, n)| (t, s / n as f64)).collect())
}

/// Attention-based score; `traces[i]` belongs to `corpus.documents()[i]`.
/// Documents are accumulated in index order.
pub fn attention_scores(corpus: &LabeledCorpus, traces: &[AttentionTrace]) -> Result<KeywordScoreTable> {
    if traces.len() != corpus.len() {
        return Err(Error::LengthMismatch(format!(
            "{} traces for {} documents",
            traces.len(),
            corpus.len()
        )));
    }
    let c = corpus.num_classes();
    let mut scores: BTreeMap<TokenId, f64> = BTreeMap::new();
    let mut per_class_scores: BTreeMap<TokenId, Vec<f64>> = BTreeMap::new();
    for (doc, trace) in corpus.documents().iter().zip(traces) {
        for (t, s) in document_attention(doc, trace)? {
            *scores.entry(t).or_insert(0.0) += s;
            per_class_scores.entry(t).or_insert_with(|| vec![0.0; c])[doc.label] += s;
        }
    }
    Ok(KeywordScoreTable {
        scheme: Scheme::Attention,
        scores,
        per_class_scores,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::corpus::{Document, Vocabulary, NUM_RESERVED};

    fn vocab(n_words: usize) -> Arc<Vocabulary> {
        let mut tokens = vec!["[PAD]".to_string(), "[MASK]".into(), "[UNK]".into()];
        tokens.extend((0..n_words).map(|i| format!("t{i:02}")));
        Arc::new(Vocabulary::from_tokens(tokens).unwrap())
    }

    fn doc(ids: &[u32], label: usize) -> Document {
        Document {
            token_ids: ids.to_vec(),
            label,
            domain: None,
        }
    }

    fn random_corpus(rng: &mut ChaCha8Rng, n_docs: usize, classes: usize, words: usize) -> LabeledCorpus {
        let docs = (0..n_docs)
            .map(|i| {
                let len = rng.gen_range(1..10);
                let ids: Vec<u32> = (0..len)
                    .map(|_| rng.gen_range(NUM_RESERVED..NUM_RESERVED + words) as u32)
                    .collect();
                doc(&ids, i % classes)
            })
            .collect();
        LabeledCorpus::new(docs, classes, vocab(words)).unwrap()
    }

    fn class_doc(counts: &[(u32, usize)]) -> ClassConcatDocument {
        ClassConcatDocument {
            class: 0,
            counts: counts.iter().copied().collect(),
            total: counts.iter().map(|c| c.1).sum(),
        }
    }

    #[test]
    fn tf_examples() {
        let x = class_doc(&[(3, 10), (4, 5)]);
        assert_eq!(term_frequency(3, &x).unwrap(), 1.0);
        assert_eq!(term_frequency(4, &x).unwrap(), 0.75);
        assert_eq!(term_frequency(9, &x).unwrap(), 0.5);
        assert!(matches!(
            term_frequency(3, &class_doc(&[])),
            Err(Error::EmptyClassDocument(0))
        ));
    }

    #[test]
    fn idf_examples() {
        let with = class_doc(&[(3, 1), (4, 1)]);
        let without = class_doc(&[(4, 1)]);
        let all = vec![with.clone(), with.clone(), with.clone(), with.clone()];
        assert_eq!(inverse_document_frequency(3, &all).unwrap(), 0.0);
        let one = vec![with, without.clone(), without.clone(), without];
        assert!((inverse_document_frequency(3, &one).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!(matches!(
            inverse_document_frequency(7, &one),
            Err(Error::ZeroDocumentFrequency(7))
        ));
    }

    #[test]
    fn idf_matches_recount_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let corpus = random_corpus(&mut rng, 30, 6, 25);
        let classes = class_documents(&corpus);
        for t in corpus.vocab().word_ids() {
            // recount straight from the documents
            let df = (0..6)
                .filter(|&c| {
                    corpus
                        .documents()
                        .iter()
                        .any(|d| d.label == c && d.token_ids.contains(&t))
                })
                .count();
            match inverse_document_frequency(t, &classes) {
                Ok(v) => assert_eq!(v, (6.0 / df as f64).ln()),
                Err(_) => assert_eq!(df, 0),
            }
        }
    }

    #[test]
    fn exclusive_top_token_scores_ln_c() {
        let docs = vec![doc(&[3, 3, 4], 0), doc(&[4, 5], 1), doc(&[4, 5], 2)];
        let corpus = LabeledCorpus::new(docs, 3, vocab(3)).unwrap();
        let table = frequency_scores(&corpus).unwrap();
        assert!((table.scores[&3] - 3f64.ln()).abs() < 1e-15);
        assert_eq!(table.scores[&4], 0.0);
        assert!(frequency_scores(&LabeledCorpus::new(vec![doc(&[3], 0)], 1, vocab(1)).unwrap()).is_err());
    }

    #[test]
    fn frequency_scores_match_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let corpus = random_corpus(&mut rng, 12, 3, 15);
        let table = frequency_scores(&corpus).unwrap();
        for t in corpus.vocab().word_ids() {
            let n: Vec<usize> = (0..3)
                .map(|c| {
                    corpus
                        .documents()
                        .iter()
                        .filter(|d| d.label == c)
                        .flat_map(|d| &d.token_ids)
                        .filter(|&&x| x == t)
                        .count()
                })
                .collect();
            let max: Vec<usize> = (0..3)
                .map(|c| {
                    corpus
                        .vocab()
                        .word_ids()
                        .map(|u| {
                            corpus
                                .documents()
                                .iter()
                                .filter(|d| d.label == c)
                                .flat_map(|d| &d.token_ids)
                                .filter(|&&x| x == u)
                                .count()
                        })
                        .max()
                        .unwrap()
                })
                .collect();
            let df = n.iter().filter(|&&k| k > 0).count();
            if df == 0 {
                assert!(!table.scores.contains_key(&t));
                continue;
            }
            let idf = (3.0 / df as f64).ln();
            let want = (0..3)
                .map(|c| (0.5 + 0.5 * n[c] as f64 / max[c] as f64) * idf)
                .fold(f64::MIN, f64::max);
            assert!((table.scores[&t] - want).abs() < 1e-12);
            // 0.5 idf <= per-class <= idf
            for &v in &table.per_class_scores[&t] {
                assert!(v >= 0.5 * idf - 1e-15 && v <= idf + 1e-15);
            }
        }
    }

    #[test]
    fn attention_single_doc_and_absent_token() {
        let corpus = LabeledCorpus::new(vec![doc(&[3, 4], 0)], 1, vocab(3)).unwrap();
        let trace = AttentionTrace {
            weights: vec![0.6, 0.8],
        };
        let table = attention_scores(&corpus, &[trace]).unwrap();
        assert!((table.scores[&3] - 0.6).abs() < 1e-15);
        assert_eq!(table.scores.get(&5).copied().unwrap_or(0.0), 0.0);
    }

    #[test]
    fn attention_rejects_misaligned_traces() {
        let corpus = LabeledCorpus::new(vec![doc(&[3, 4], 0)], 1, vocab(3)).unwrap();
        let bad = AttentionTrace { weights: vec![1.0] };
        assert!(matches!(
            attention_scores(&corpus, &[bad]),
            Err(Error::LengthMismatch(_))
        ));
        assert!(attention_scores(&corpus, &[]).is_err());
    }

    fn random_traces(rng: &mut ChaCha8Rng, corpus: &LabeledCorpus) -> Vec<AttentionTrace> {
        corpus
            .documents()
            .iter()
            .map(|d| {
                let raw: Vec<f64> = d.token_ids.iter().map(|_| rng.gen::<f64>() + 1e-3).collect();
                let s: f64 = raw.iter().sum();
                AttentionTrace {
                    weights: raw.into_iter().map(|x| x / s).collect(),
                }
            })
            .collect()
    }

    #[test]
    fn attention_matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let corpus = random_corpus(&mut rng, 20, 2, 12);
        let traces = random_traces(&mut rng, &corpus);
        let table = attention_scores(&corpus, &traces).unwrap();
        for t in corpus.vocab().word_ids() {
            let mut want = 0.0;
            for (d, a) in corpus.documents().iter().zip(&traces) {
                let n = d.token_ids.iter().filter(|&&x| x == t).count();
                if n == 0 {
                    continue;
                }
                let norm = a.weights.iter().map(|v| v * v).sum::<f64>().sqrt();
                let mut inner = 0.0;
                for i in 0..d.token_ids.len() {
                    if d.token_ids[i] == t {
                        inner += a.weights[i] / norm;
                    }
                }
                want += inner / n as f64;
            }
            let got = table.scores.get(&t).copied().unwrap_or(0.0);
            assert!((got - want).abs() < 1e-9, "token {t}: {got} vs {want}");
        }
    }

    #[test]
    fn attention_is_order_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let corpus = random_corpus(&mut rng, 15, 3, 10);
        let traces = random_traces(&mut rng, &corpus);
        let a = attention_scores(&corpus, &traces).unwrap();
        let mut docs = corpus.documents().to_vec();
        let mut tr = traces.clone();
        docs.reverse();
        tr.reverse();
        let b = attention_scores(&corpus.with_documents(docs).unwrap(), &tr).unwrap();
        for (t, v) in &a.scores {
            assert!((v - b.scores[t]).abs() < 1e-12);
        }
    }
}
