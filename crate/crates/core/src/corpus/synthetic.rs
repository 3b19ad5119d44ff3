//! Planted-keyword benchmark.
//!
//! Every class owns a few keyword tokens and a topic (a slice of a shared
//! context vocabulary). In-distribution documents are context words drawn
//! from the class topic mixed with uniform background words, plus one class
//! keyword with probability `injection_rate`. OOD documents come from topics
//! no class owns and borrow an in-distribution keyword with probability
//! `ood_overlap_rate`. Cross-domain documents keep the class context but carry
//! the keyword of `swap_table[c]` instead of their own.

use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{build_vocabulary, LabeledCorpus, RawRecord, DEFAULT_MAX_LEN};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

pub const SOURCE_DOMAIN: &str = "source";
pub const OOD_DOMAIN: &str = "ood";
pub const TARGET_DOMAIN: &str = "target";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub keywords_per_class: usize,
    /// Size of the context vocabulary (class topics, OOD topics and the
    /// shared background words).
    pub context_vocab: usize,
    /// Topic words per class (and per OOD topic), carved out of the context
    /// vocabulary. Class topic words never occur as background.
    pub topic_words: usize,
    /// Probability that a context token is drawn from the document's topic;
    /// otherwise it is a background word.
    pub topic_rate: f64,
    pub num_ood_topics: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub injection_rate: f64,
    pub ood_overlap_rate: f64,
    /// Class whose keywords cross-domain documents of class `c` carry.
    /// Empty means the cyclic shift `c -> (c + 1) % C`.
    pub swap_table: Vec<usize>,
    pub train_docs: usize,
    pub test_id_docs: usize,
    pub test_ood_docs: usize,
    pub test_crossdomain_docs: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_classes: 4,
            keywords_per_class: 3,
            context_vocab: 120,
            topic_words: 12,
            topic_rate: 0.3,
            num_ood_topics: 2,
            min_len: 12,
            max_len: 24,
            injection_rate: 0.9,
            ood_overlap_rate: 0.5,
            swap_table: Vec::new(),
            train_docs: 1200,
            test_id_docs: 400,
            test_ood_docs: 400,
            test_crossdomain_docs: 400,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if self.num_classes == 0 || self.keywords_per_class == 0 {
            return bad("num_classes and keywords_per_class must be positive");
        }
        for (name, r) in [
            ("topic_rate", self.topic_rate),
            ("injection_rate", self.injection_rate),
            ("ood_overlap_rate", self.ood_overlap_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad("need 1 <= min_len <= max_len");
        }
        if self.context_vocab == 0 {
            return bad("context_vocab must be positive");
        }
        if (self.num_classes + self.num_ood_topics) * self.topic_words > self.context_vocab {
            return bad("topics do not fit in the context vocabulary");
        }
        if self.num_classes * self.topic_words >= self.context_vocab && self.topic_rate < 1.0 {
            return bad("no background words left outside the class topics");
        }
        if self.topic_words == 0 && self.topic_rate > 0.0 {
            return bad("topic_rate > 0 needs topic_words > 0");
        }
        if !self.swap_table.is_empty()
            && (self.swap_table.len() != self.num_classes
                || self.swap_table.iter().any(|&c| c >= self.num_classes))
        {
            return bad("swap_table must map every class to a class");
        }
        if self.test_ood_docs > 0 && self.num_ood_topics == 0 && self.topic_rate > 0.0 {
            return bad("OOD documents need at least one OOD topic");
        }
        Ok(())
    }

    pub fn swap_for(&self, class: usize) -> usize {
        if self.swap_table.is_empty() {
            (class + 1) % self.num_classes
        } else {
            self.swap_table[class]
        }
    }

    pub fn keyword(class: usize, j: usize) -> String {
        format!("kw{class}n{j}")
    }

    pub fn context_word(i: usize) -> String {
        format!("w{i:03}")
    }

    /// All planted keyword strings of `class`.
    pub fn class_keywords(&self, class: usize) -> Vec<String> {
        (0..self.keywords_per_class)
            .map(|j| Self::keyword(class, j))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticRecords {
    pub train: Vec<RawRecord>,
    pub test_id: Vec<RawRecord>,
    pub test_ood: Vec<RawRecord>,
    pub test_crossdomain: Vec<RawRecord>,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpora {
    pub train: LabeledCorpus,
    pub test_id: LabeledCorpus,
    pub test_ood: LabeledCorpus,
    pub test_crossdomain: LabeledCorpus,
}

#[derive(Clone, Copy)]
enum Topic {
    Class(usize),
    Ood(usize),
}

struct Generator<'a> {
    spec: &'a SyntheticSpec,
}

impl Generator<'_> {
    fn context(&self, topic: Topic, rng: &mut Rng) -> Vec<String> {
        let s = self.spec;
        let len = rng.gen_range(s.min_len..=s.max_len);
        let offset = match topic {
            Topic::Class(c) => c * s.topic_words,
            Topic::Ood(o) => (s.num_classes + o) * s.topic_words,
        };
        (0..len)
            .map(|_| {
                let i = if s.topic_words > 0 && rng.gen::<f64>() < s.topic_rate {
                    offset + rng.gen_range(0..s.topic_words)
                } else {
                    rng.gen_range(s.num_classes * s.topic_words..s.context_vocab)
                };
                SyntheticSpec::context_word(i)
            })
            .collect()
    }

    fn plant(&self, words: &mut [String], class: usize, rate: f64, rng: &mut Rng) {
        if rng.gen::<f64>() < rate {
            let pos = rng.gen_range(0..words.len());
            let j = rng.gen_range(0..self.spec.keywords_per_class);
            words[pos] = SyntheticSpec::keyword(class, j);
        }
    }

    fn split(&self, name: &str, n: usize) -> Vec<RawRecord> {
        let s = self.spec;
        let mut rng = rng::stream(s.seed, &[rng::tag(name)]);
        (0..n)
            .map(|i| {
                let class = i % s.num_classes;
                let (words, label, domain) = match name {
                    "ood" => {
                        let topic = Topic::Ood(rng.gen_range(0..s.num_ood_topics.max(1)));
                        let mut words = self.context(topic, &mut rng);
                        let borrowed = rng.gen_range(0..s.num_classes);
                        self.plant(&mut words, borrowed, s.ood_overlap_rate, &mut rng);
                        (words, 0, OOD_DOMAIN)
                    }
                    "crossdomain" => {
                        let mut words = self.context(Topic::Class(class), &mut rng);
                        self.plant(&mut words, s.swap_for(class), s.injection_rate, &mut rng);
                        (words, class, TARGET_DOMAIN)
                    }
                    _ => {
                        let mut words = self.context(Topic::Class(class), &mut rng);
                        self.plant(&mut words, class, s.injection_rate, &mut rng);
                        (words, class, SOURCE_DOMAIN)
                    }
                };
                RawRecord {
                    text: words.join(" "),
                    label,
                    domain: Some(domain.to_owned()),
                }
            })
            .collect()
    }
}

/// Generates the four splits as raw text records.
pub fn generate_synthetic_records(spec: &SyntheticSpec) -> Result<SyntheticRecords> {
    spec.validate()?;
    let g = Generator { spec };
    Ok(SyntheticRecords {
        train: g.split("train", spec.train_docs),
        test_id: g.split("test_id", spec.test_id_docs),
        test_ood: g.split("ood", spec.test_ood_docs),
        test_crossdomain: g.split("crossdomain", spec.test_crossdomain_docs),
    })
}

/// Generates and tokenizes the four splits. The vocabulary is built from the
/// training split (min count 1) and shared by all four corpora.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpora> {
    let recs = generate_synthetic_records(spec)?;
    let texts: Vec<&str> = recs.train.iter().map(|r| r.text.as_str()).collect();
    let vocab = Arc::new(build_vocabulary(&texts, 1)?);
    let c = spec.num_classes;
    let make = |r: &[RawRecord]| LabeledCorpus::from_records(r, c, Arc::clone(&vocab), DEFAULT_MAX_LEN);
    Ok(SyntheticCorpora {
        train: make(&recs.train)?,
        test_id: make(&recs.test_id)?,
        test_ood: make(&recs.test_ood)?,
        test_crossdomain: make(&recs.test_crossdomain)?,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::corpus::split_words;

    fn has_any(text: &str, words: &[String]) -> bool {
        split_words(text).any(|w| words.contains(&w))
    }

    fn all_keywords(spec: &SyntheticSpec) -> Vec<String> {
        (0..spec.num_classes).flat_map(|c| spec.class_keywords(c)).collect()
    }

    #[test]
    fn full_injection_plants_every_train_doc() {
        let spec = SyntheticSpec {
            injection_rate: 1.0,
            train_docs: 200,
            ..Default::default()
        };
        let recs = generate_synthetic_records(&spec).unwrap();
        for r in &recs.train {
            assert!(has_any(&r.text, &spec.class_keywords(r.label)));
        }
    }

    #[test]
    fn zero_overlap_keeps_ood_clean() {
        let spec = SyntheticSpec {
            ood_overlap_rate: 0.0,
            test_ood_docs: 300,
            ..Default::default()
        };
        let recs = generate_synthetic_records(&spec).unwrap();
        let kws = all_keywords(&spec);
        assert!(recs.test_ood.iter().all(|r| !has_any(&r.text, &kws)));
        assert!(recs.test_ood.iter().all(|r| r.domain.as_deref() == Some(OOD_DOMAIN)));
    }

    #[test]
    fn per_class_injection_frequency_matches_rate() {
        let spec = SyntheticSpec {
            num_classes: 4,
            injection_rate: 0.9,
            seed: 7,
            train_docs: 8000,
            ..Default::default()
        };
        let recs = generate_synthetic_records(&spec).unwrap();
        for c in 0..4 {
            let kws = spec.class_keywords(c);
            let docs: Vec<_> = recs.train.iter().filter(|r| r.label == c).collect();
            assert!(docs.len() >= 2000);
            let hit = docs.iter().filter(|r| has_any(&r.text, &kws)).count();
            let freq = hit as f64 / docs.len() as f64;
            assert!((freq - 0.9).abs() <= 0.03, "class {c}: {freq}");
        }
    }

    #[test]
    fn cross_domain_docs_carry_swapped_keywords() {
        let spec = SyntheticSpec {
            injection_rate: 1.0,
            swap_table: vec![2, 3, 0, 1],
            ..Default::default()
        };
        let recs = generate_synthetic_records(&spec).unwrap();
        for r in &recs.test_crossdomain {
            assert!(has_any(&r.text, &spec.class_keywords(spec.swap_table[r.label])));
            assert!(!has_any(&r.text, &spec.class_keywords(r.label)));
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let spec = SyntheticSpec {
            seed: 11,
            ..Default::default()
        };
        let a = generate_synthetic_records(&spec).unwrap();
        let b = generate_synthetic_records(&spec).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test_ood, b.test_ood);
        assert_eq!(a.test_crossdomain, b.test_crossdomain);
        let other = generate_synthetic_records(&SyntheticSpec { seed: 12, ..spec }).unwrap();
        assert_ne!(a.train, other.train);
    }

    #[test]
    fn vocabulary_size_matches_brute_force_count() {
        // 38 context words + 4 classes x 3 keywords = 50 generator tokens
        let spec = SyntheticSpec {
            context_vocab: 38,
            topic_words: 6,
            num_ood_topics: 1,
            train_docs: 1000,
            ..Default::default()
        };
        let recs = generate_synthetic_records(&spec).unwrap();
        let distinct: BTreeSet<String> = recs
            .train
            .iter()
            .flat_map(|r| r.text.split(' ').map(str::to_owned).collect::<Vec<_>>())
            .collect();
        let vocab = build_vocabulary(
            &recs.train.iter().map(|r| r.text.as_str()).collect::<Vec<_>>(),
            1,
        )
        .unwrap();
        assert_eq!(vocab.len(), distinct.len() + 3);
        assert_eq!(vocab.len(), 53);
    }

    #[test]
    fn invalid_rates_are_rejected() {
        let spec = SyntheticSpec {
            injection_rate: 1.5,
            ..Default::default()
        };
        assert!(spec.validate().is_err());
        let spec = SyntheticSpec {
            swap_table: vec![0, 1],
            ..Default::default()
        };
        assert!(spec.validate().is_err());
    }
}
