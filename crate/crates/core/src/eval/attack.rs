use rand::seq::SliceRandom;

use crate::corpus::{LabeledCorpus, TokenId};
use crate::error::Result;
use crate::rng;

/// Replaces every occurrence of a class-`c` keyword in a class-`c` document
/// with a keyword drawn uniformly from the union of the other classes'
/// keywords. Labels, lengths and context tokens are kept. Documents of a
/// class with no keywords (or with no foreign keywords available) pass
/// through unchanged.
pub fn keyword_substitution_attack(
    corpus: &LabeledCorpus,
    keywords_by_class: &[Vec<TokenId>],
    seed: u64,
) -> Result<LabeledCorpus> {
    let foreign: Vec<Vec<TokenId>> = (0..keywords_by_class.len())
        .map(|c| {
            let mut v: Vec<TokenId> = keywords_by_class
                .iter()
                .enumerate()
                .filter(|&(o, _)| o != c)
                .flat_map(|(_, ks)| ks.iter().copied())
                .filter(|t| !keywords_by_class[c].contains(t))
                .collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();
    let docs = corpus
        .documents()
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut d = d.clone();
            let (Some(own), Some(pool)) = (keywords_by_class.get(d.label), foreign.get(d.label)) else {
                return d;
            };
            if own.is_empty() || pool.is_empty() {
                return d;
            }
            let mut rng = rng::stream(seed, &[rng::tag("attack"), i as u64]);
            for t in d.token_ids.iter_mut() {
                if own.contains(t) {
                    *t = *pool.choose(&mut rng).expect("non-empty pool");
                }
            }
            d
        })
        .collect();
    corpus.with_documents(docs)
}
