//! Vocabulary, documents, corpus files and the synthetic benchmark.

mod io;
mod synthetic;
mod vocab;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    load_corpus, load_corpus_with, load_vocabulary, read_records, save_corpus, save_vocabulary,
    write_records, CorpusMeta,
};
pub use synthetic::{generate_synthetic, generate_synthetic_records, SyntheticCorpora, SyntheticRecords, SyntheticSpec};
pub use vocab::{
    build_vocabulary, detokenize, is_reserved, split_words, tokenize, TokenId, Vocabulary, MASK,
    MASK_TOKEN, NUM_RESERVED, PAD, PAD_TOKEN, UNK, UNK_TOKEN,
};

pub const DEFAULT_MAX_LEN: usize = 128;

/// One line of a corpus JSONL file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub text: String,
    pub label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub token_ids: Vec<TokenId>,
    pub label: usize,
    pub domain: Option<String>,
}

impl Document {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

/// Tokenized documents sharing one vocabulary and label space.
#[derive(Debug, Clone)]
pub struct LabeledCorpus {
    documents: Vec<Document>,
    num_classes: usize,
    vocab: Arc<Vocabulary>,
}

impl LabeledCorpus {
    pub fn new(documents: Vec<Document>, num_classes: usize, vocab: Arc<Vocabulary>) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidConfig("num_classes must be positive".into()));
        }
        for doc in &documents {
            if doc.label >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: doc.label,
                    num_classes,
                });
            }
            if let Some(&bad) = doc.token_ids.iter().find(|&&id| id as usize >= vocab.len()) {
                return Err(Error::InvalidVocabulary(format!(
                    "token id {bad} outside vocabulary of size {}",
                    vocab.len()
                )));
            }
        }
        Ok(Self {
            documents,
            num_classes,
            vocab,
        })
    }

    /// Tokenizes raw records, truncating each document to `max_len` tokens.
    /// Records whose text yields no tokens are rejected.
    pub fn from_records(
        records: &[RawRecord],
        num_classes: usize,
        vocab: Arc<Vocabulary>,
        max_len: usize,
    ) -> Result<Self> {
        let mut documents = Vec::with_capacity(records.len());
        for (i, rec) in records.iter().enumerate() {
            let mut ids = tokenize(&rec.text, &vocab);
            if ids.is_empty() {
                return Err(Error::InvalidConfig(format!("record {i} has no tokens")));
            }
            ids.truncate(max_len);
            documents.push(Document {
                token_ids: ids,
                label: rec.label,
                domain: rec.domain.clone(),
            });
        }
        Self::new(documents, num_classes, vocab)
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Document indices of each class-wise corpus D_c.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes];
        for (i, doc) in self.documents.iter().enumerate() {
            out[doc.label].push(i);
        }
        out
    }

    /// Splits into one corpus per class, preserving document order.
    pub fn class_corpora(&self) -> Vec<LabeledCorpus> {
        self.class_indices()
            .into_iter()
            .map(|idx| LabeledCorpus {
                documents: idx.into_iter().map(|i| self.documents[i].clone()).collect(),
                num_classes: self.num_classes,
                vocab: Arc::clone(&self.vocab),
            })
            .collect()
    }

    /// Same vocabulary and label space, new documents.
    pub fn with_documents(&self, documents: Vec<Document>) -> Result<Self> {
        Self::new(documents, self.num_classes, Arc::clone(&self.vocab))
    }

    pub fn to_records(&self) -> Vec<RawRecord> {
        self.documents
            .iter()
            .map(|d| RawRecord {
                text: detokenize(&d.token_ids, &self.vocab),
                label: d.label,
                domain: d.domain.clone(),
            })
            .collect()
    }
}
