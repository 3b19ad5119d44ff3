use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{KeywordScoreTable, Scheme};
use crate::corpus::{Document, LabeledCorpus, TokenId, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    ClassAgnostic,
    ClassBalanced,
}

/// Selected keywords, ordered by descending score.
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordSet {
    tokens: Vec<TokenId>,
    scores: Vec<f64>,
    members: HashSet<TokenId>,
    pub scheme: Scheme,
    pub mode: SelectionMode,
    pub k: usize,
}

impl KeywordSet {
    pub fn new(
        entries: Vec<(TokenId, f64)>,
        scheme: Scheme,
        mode: SelectionMode,
        k: usize,
    ) -> Result<Self> {
        let mut members = HashSet::with_capacity(entries.len());
        for &(t, _) in &entries {
            if !members.insert(t) {
                return Err(Error::InvalidConfig(format!("duplicate keyword id {t}")));
            }
        }
        let (tokens, scores) = entries.into_iter().unzip();
        Ok(Self {
            tokens,
            scores,
            members,
            scheme,
            mode,
            k,
        })
    }

    /// An empty set; masking with it leaves every document keyword-free.
    pub fn empty(scheme: Scheme) -> Self {
        Self::new(Vec::new(), scheme, SelectionMode::ClassAgnostic, 0).expect("no duplicates")
    }

    pub fn contains(&self, t: TokenId) -> bool {
        self.members.contains(&t)
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn to_file(&self, vocab: &Vocabulary) -> KeywordFile {
        KeywordFile {
            scheme: self.scheme,
            mode: self.mode,
            k: self.k,
            entries: self
                .tokens
                .iter()
                .zip(&self.scores)
                .map(|(&t, &score)| KeywordEntry {
                    token: vocab.token(t).unwrap_or("[UNK]").to_owned(),
                    score,
                })
                .collect(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn from_file(file: &KeywordFile, vocab: &Vocabulary) -> Result<Self> {
        let entries = file
            .entries
            .iter()
            .map(|e| {
                vocab
                    .id(&e.token)
                    .map(|id| (id, e.score))
                    .ok_or_else(|| Error::InvalidVocabulary(format!("keyword {:?} not in vocabulary", e.token)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries, file.scheme, file.mode, file.k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordEntry {
    pub token: String,
    pub score: f64,
}

/// On-disk keyword set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordFile {
    pub scheme: Scheme,
    pub mode: SelectionMode,
    #[serde(rename = "K")]
    pub k: usize,
    pub entries: Vec<KeywordEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

pub fn save_keyword_set(path: &Path, file: &KeywordFile) -> Result<()> {
    let text = serde_json::to_string_pretty(file)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_keyword_set(path: &Path) -> Result<KeywordFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn rank(vocab: &Vocabulary, a: (TokenId, f64), b: (TokenId, f64)) -> Ordering {
    b.1.total_cmp(&a.1)
        .then_with(|| vocab.token(a.0).cmp(&vocab.token(b.0)))
}

/// Picks the top `k` tokens of `table`.
///
/// Class-agnostic selection ranks by the table score. Class-balanced
/// selection ranks every class by its per-class score and takes tokens
/// round-robin across classes (skipping ones already taken) until `k` are
/// chosen, so each class contributes about `ceil(k / C)`. Ties go to the
/// lexicographically smaller token string.
pub fn select_keywords(
    table: &KeywordScoreTable,
    k: usize,
    mode: SelectionMode,
    corpus: &LabeledCorpus,
) -> Result<KeywordSet> {
    if k == 0 {
        return Err(Error::InvalidConfig("K must be at least 1".into()));
    }
    let vocab = corpus.vocab();
    let mut all: Vec<(TokenId, f64)> = table.scores.iter().map(|(&t, &s)| (t, s)).collect();
    all.sort_by(|&a, &b| rank(vocab, a, b));

    let chosen: Vec<(TokenId, f64)> = match mode {
        SelectionMode::ClassAgnostic => all.into_iter().take(k).collect(),
        SelectionMode::ClassBalanced => {
            let c = corpus.num_classes();
            let ranked: Vec<Vec<TokenId>> = (0..c)
                .map(|class| {
                    let mut v: Vec<(TokenId, f64)> = table
                        .scores
                        .keys()
                        .map(|&t| {
                            let s = table
                                .per_class_scores
                                .get(&t)
                                .and_then(|p| p.get(class).copied())
                                .unwrap_or(0.0);
                            (t, s)
                        })
                        .collect();
                    v.sort_by(|&a, &b| rank(vocab, a, b));
                    v.into_iter().map(|(t, _)| t).collect()
                })
                .collect();
            let target = k.min(table.scores.len());
            let mut taken = HashSet::new();
            let mut cursors = vec![0usize; c];
            let mut picked = Vec::new();
            while picked.len() < target {
                for class in 0..c {
                    if picked.len() == target {
                        break;
                    }
                    while let Some(&t) = ranked[class].get(cursors[class]) {
                        cursors[class] += 1;
                        if taken.insert(t) {
                            picked.push(t);
                            break;
                        }
                    }
                }
            }
            let mut entries: Vec<(TokenId, f64)> =
                picked.into_iter().map(|t| (t, table.scores[&t])).collect();
            entries.sort_by(|&a, &b| rank(vocab, a, b));
            entries
        }
    };
    KeywordSet::new(chosen, table.scheme, mode, k)
}

/// The keyword subsequence of `doc`, in document order.
pub fn document_keywords(doc: &Document, keywords: &KeywordSet) -> Vec<TokenId> {
    doc.token_ids
        .iter()
        .copied()
        .filter(|&t| keywords.contains(t))
        .collect()
}

/// Assigns every keyword to the class whose documents use it most often
/// (ties to the lower class). Keywords absent from `corpus` are dropped.
pub fn keywords_by_class(keywords: &KeywordSet, corpus: &LabeledCorpus) -> Vec<Vec<TokenId>> {
    let c = corpus.num_classes();
    let mut counts: BTreeMap<TokenId, Vec<usize>> = BTreeMap::new();
    for doc in corpus.documents() {
        for &t in &doc.token_ids {
            if keywords.contains(t) {
                counts.entry(t).or_insert_with(|| vec![0; c])[doc.label] += 1;
            }
        }
    }
    let mut out = vec![Vec::new(); c];
    for &t in keywords.tokens() {
        if let Some(per_class) = counts.get(&t) {
            let best = (0..c).fold(0, |b, i| if per_class[i] > per_class[b] { i } else { b });
            out[best].push(t);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::corpus::build_vocabulary;

    fn corpus_with_words(words: &[&str], classes: usize) -> LabeledCorpus {
        let vocab = Arc::new(build_vocabulary(&[words.join(" ")], 1).unwrap());
        let docs = (0..classes)
            .map(|c| Document {
                token_ids: vec![3],
                label: c,
                domain: None,
            })
            .collect();
        LabeledCorpus::new(docs, classes, vocab).unwrap()
    }

    fn table(corpus: &LabeledCorpus, scores: &[(&str, f64)]) -> KeywordScoreTable {
        let v = corpus.vocab();
        KeywordScoreTable {
            scheme: Scheme::Frequency,
            scores: scores.iter().map(|&(w, s)| (v.id(w).unwrap(), s)).collect(),
            per_class_scores: BTreeMap::new(),
        }
    }

    #[test]
    fn top_two_of_three() {
        let corpus = corpus_with_words(&["a", "b", "c"], 2);
        let t = table(&corpus, &[("a", 3.0), ("b", 2.0), ("c", 1.0)]);
        let set = select_keywords(&t, 2, SelectionMode::ClassAgnostic, &corpus).unwrap();
        let v = corpus.vocab();
        assert_eq!(set.tokens(), &[v.id("a").unwrap(), v.id("b").unwrap()]);
        assert!(set.contains(v.id("a").unwrap()) && !set.contains(v.id("c").unwrap()));
    }

    #[test]
    fn large_k_returns_everything_and_ties_are_lexicographic() {
        let corpus = corpus_with_words(&["b", "a", "c"], 2);
        let t = table(&corpus, &[("b", 1.0), ("a", 1.0), ("c", 2.0)]);
        let set = select_keywords(&t, 10, SelectionMode::ClassAgnostic, &corpus).unwrap();
        let v = corpus.vocab();
        let words: Vec<&str> = set.tokens().iter().map(|&t| v.token(t).unwrap()).collect();
        assert_eq!(words, ["c", "a", "b"]);
        assert!(select_keywords(&t, 0, SelectionMode::ClassAgnostic, &corpus).is_err());
    }

    #[test]
    fn class_balanced_takes_from_every_class() {
        let corpus = corpus_with_words(&["a", "b", "c", "d"], 2);
        let v = corpus.vocab();
        let mut t = table(&corpus, &[("a", 4.0), ("b", 3.0), ("c", 2.0), ("d", 1.0)]);
        let per = [("a", [4.0, 0.0]), ("b", [3.0, 0.0]), ("c", [0.0, 2.0]), ("d", [0.0, 1.0])];
        for (w, p) in per {
            t.per_class_scores.insert(v.id(w).unwrap(), p.to_vec());
        }
        let set = select_keywords(&t, 2, SelectionMode::ClassBalanced, &corpus).unwrap();
        assert_eq!(set.tokens(), &[v.id("a").unwrap(), v.id("c").unwrap()]);
        let agnostic = select_keywords(&t, 2, SelectionMode::ClassAgnostic, &corpus).unwrap();
        assert_eq!(agnostic.tokens(), &[v.id("a").unwrap(), v.id("b").unwrap()]);
    }

    #[test]
    fn sort_then_slice_oracle() {
        let words: Vec<String> = (0..100).map(|i| format!("w{i:03}")).collect();
        let refs: Vec<&str> = words.iter().map(String::as_str).collect();
        let corpus = corpus_with_words(&refs, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let scores: Vec<(&str, f64)> = refs.iter().map(|&w| (w, (rng.gen_range(0..40) as f64) / 4.0)).collect();
        let t = table(&corpus, &scores);
        let set = select_keywords(&t, 10, SelectionMode::ClassAgnostic, &corpus).unwrap();
        let mut oracle = scores.clone();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(b.0)));
        let want: Vec<TokenId> = oracle[..10].iter().map(|(w, _)| corpus.vocab().id(w).unwrap()).collect();
        assert_eq!(set.tokens(), want.as_slice());
    }

    #[test]
    fn file_round_trip() {
        let corpus = corpus_with_words(&["a", "b"], 2);
        let t = table(&corpus, &[("a", 2.0), ("b", 1.0)]);
        let set = select_keywords(&t, 2, SelectionMode::ClassAgnostic, &corpus).unwrap();
        let file = set.to_file(corpus.vocab());
        let json = serde_json::to_string(&file).unwrap();
        assert!(json.contains("\"K\":2"));
        let back = KeywordSet::from_file(&serde_json::from_str(&json).unwrap(), corpus.vocab()).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn document_keywords_keep_order() {
        let corpus = corpus_with_words(&["a", "b", "c"], 2);
        let v = corpus.vocab();
        let (a, b, c) = (v.id("a").unwrap(), v.id("b").unwrap(), v.id("c").unwrap());
        let set = KeywordSet::new(vec![(a, 1.0), (c, 0.5)], Scheme::Frequency, SelectionMode::ClassAgnostic, 2).unwrap();
        let doc = Document {
            token_ids: vec![c, b, a, c],
            label: 0,
            domain: None,
        };
        assert_eq!(document_keywords(&doc, &set), vec![c, a, c]);
    }

    proptest! {
        #[test]
        fn top_k_invariant_under_monotone_rescaling(
            raw in prop::collection::vec(0.0f64..10.0, 20),
            k in 1usize..20,
            scale in 0.1f64..10.0,
        ) {
            let words: Vec<String> = (0..20).map(|i| format!("w{i:02}")).collect();
            let refs: Vec<&str> = words.iter().map(String::as_str).collect();
            let corpus = corpus_with_words(&refs, 2);
            let s1: Vec<(&str, f64)> = refs.iter().copied().zip(raw.iter().copied()).collect();
            let s2: Vec<(&str, f64)> = s1.iter().map(|&(w, s)| (w, (scale * s).exp())).collect();
            let a = select_keywords(&table(&corpus, &s1), k, SelectionMode::ClassAgnostic, &corpus).unwrap();
            let b = select_keywords(&table(&corpus, &s2), k, SelectionMode::ClassAgnostic, &corpus).unwrap();
            prop_assert_eq!(a.tokens(), b.tokens());
            prop_assert_eq!(a.len(), k.min(20));
        }
    }
}
