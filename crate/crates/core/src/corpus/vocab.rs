use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const MASK: TokenId = 1;
pub const UNK: TokenId = 2;

pub const PAD_TOKEN: &str = "[PAD]";
pub const MASK_TOKEN: &str = "[MASK]";
pub const UNK_TOKEN: &str = "[UNK]";

pub const NUM_RESERVED: usize = 3;

pub fn is_reserved(id: TokenId) -> bool {
    (id as usize) < NUM_RESERVED
}

/// Word-level vocabulary. Ids 0, 1 and 2 are always `[PAD]`, `[MASK]` and
/// `[UNK]`; corpus words follow in descending count order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    token_to_id: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Rebuilds a vocabulary from its token list (line number = id).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let reserved = [PAD_TOKEN, MASK_TOKEN, UNK_TOKEN];
        if tokens.len() < NUM_RESERVED || tokens[..NUM_RESERVED] != reserved {
            return Err(Error::InvalidVocabulary(format!(
                "first three tokens must be {reserved:?}"
            )));
        }
        let mut token_to_id = HashMap::with_capacity(tokens.len());
        for (id, token) in tokens.iter().enumerate() {
            if token.is_empty() {
                return Err(Error::InvalidVocabulary(format!("empty token at id {id}")));
            }
            if token_to_id.insert(token.clone(), id as TokenId).is_some() {
                return Err(Error::InvalidVocabulary(format!("duplicate token {token:?}")));
            }
        }
        Ok(Self {
            tokens,
            token_to_id,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Ids of corpus-derived (non-reserved) tokens.
    pub fn word_ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        (NUM_RESERVED..self.tokens.len()).map(|i| i as TokenId)
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Vocabulary::from_tokens(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

/// Lowercased words of `text`, split on whitespace and punctuation.
pub fn split_words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Builds a vocabulary from raw texts keeping words seen at least
/// `min_count` times. Order: descending count, ties lexicographic.
pub fn build_vocabulary<S: AsRef<str>>(raw_texts: &[S], min_count: usize) -> Result<Vocabulary> {
    if raw_texts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for text in raw_texts {
        for word in split_words(text.as_ref()) {
            *counts.entry(word).or_insert(0) += 1;
        }
    }
    let mut words: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|&(_, n)| n >= min_count.max(1))
        .collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let mut tokens: Vec<String> = vec![PAD_TOKEN.into(), MASK_TOKEN.into(), UNK_TOKEN.into()];
    tokens.extend(words.into_iter().map(|(w, _)| w));
    Vocabulary::from_tokens(tokens)
}

/// Maps text to token ids; unknown words become `[UNK]`.
pub fn tokenize(text: &str, vocab: &Vocabulary) -> Vec<TokenId> {
    split_words(text)
        .map(|w| vocab.id(&w).filter(|&id| !is_reserved(id)).unwrap_or(UNK))
        .collect()
}

/// Inverse of [`tokenize`] for in-vocabulary sequences.
pub fn detokenize(ids: &[TokenId], vocab: &Vocabulary) -> String {
    ids.iter()
        .map(|&id| vocab.token(id).unwrap_or(UNK_TOKEN))
        .collect::<Vec<_>>()
        .join(" ")
}
