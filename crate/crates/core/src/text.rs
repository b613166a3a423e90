//! Word-level vocabulary and fixed-length encoding.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{normalized_words, word_tokenize, Corpus};
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const CLS: usize = 2;

pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";
pub const CLS_TOKEN: &str = "[CLS]";

pub const DEFAULT_MAX_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let mut id_to_token: Vec<String> = [PAD_TOKEN, UNK_TOKEN, CLS_TOKEN]
            .iter()
            .map(|s| s.to_string())
            .collect();
        id_to_token.extend(tokens);
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            token_to_id,
            id_to_token,
        }
    }

    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn id(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    /// `{token: id}` JSON object.
    pub fn to_json(&self) -> Result<String> {
        let map: BTreeMap<&str, usize> = self
            .id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect();
        Ok(serde_json::to_string_pretty(&map)?)
    }

    pub fn from_map(map: BTreeMap<String, usize>) -> Result<Self> {
        let mut id_to_token = vec![None; map.len()];
        for (tok, id) in map {
            let slot = id_to_token
                .get_mut(id)
                .ok_or_else(|| Error::InvalidConfig(format!("vocabulary id {id} is not dense")))?;
            if slot.replace(tok).is_some() {
                return Err(Error::InvalidConfig(format!("vocabulary id {id} assigned twice")));
            }
        }
        let id_to_token: Vec<String> = id_to_token.into_iter().map(Option::unwrap).collect();
        for (id, special) in [(PAD, PAD_TOKEN), (UNK, UNK_TOKEN), (CLS, CLS_TOKEN)] {
            if id_to_token.get(id).map(String::as_str) != Some(special) {
                return Err(Error::InvalidConfig(format!("vocabulary must reserve {special} at id {id}")));
            }
        }
        Ok(Self::from_tokens(id_to_token.into_iter().skip(3)))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_map(serde_json::from_str(text)?)
    }
}

impl Serialize for Vocabulary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let map: BTreeMap<&str, usize> = self
            .id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect();
        map.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let map = BTreeMap::<String, usize>::deserialize(d)?;
        Vocabulary::from_map(map).map_err(serde::de::Error::custom)
    }
}

/// Builds a vocabulary from a list of texts. Tokens are ordered by
/// frequency (descending) then lexicographically.
pub fn build_vocab_from_texts<'a>(
    texts: impl IntoIterator<Item = &'a str>,
    min_freq: usize,
) -> Result<Vocabulary> {
    if min_freq == 0 {
        return Err(Error::InvalidConfig("min_freq must be at least 1".into()));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for t in texts {
        for w in normalized_words(t) {
            *counts.entry(w).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_freq).collect();
    if kept.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(Vocabulary::from_tokens(kept.into_iter().map(|(t, _)| t)))
}

/// Vocabulary over both sides of every pair.
pub fn build_vocab(corpus: &Corpus, min_freq: usize) -> Result<Vocabulary> {
    let texts = corpus.pairs.iter().flat_map(|p| {
        std::iter::once(p.complex_text.as_str()).chain(p.simple_texts.iter().map(String::as_str))
    });
    build_vocab_from_texts(texts, min_freq)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoded {
    /// `CLS`, then word ids, then `PAD` up to `max_len`.
    pub ids: Vec<usize>,
    pub true_length: usize,
    /// Surface words occupying positions `1..true_length`.
    pub words: Vec<String>,
}

impl Encoded {
    pub fn max_len(&self) -> usize {
        self.ids.len()
    }

    pub fn mask(&self) -> Vec<bool> {
        (0..self.ids.len()).map(|i| i < self.true_length).collect()
    }
}

pub fn encode(text: &str, vocab: &Vocabulary, max_len: usize) -> Encoded {
    assert!(max_len >= 2, "max_len must leave room for CLS and one token");
    let words: Vec<String> = word_tokenize(text)
        .into_iter()
        .take(max_len - 1)
        .map(str::to_string)
        .collect();
    let mut ids = Vec::with_capacity(max_len);
    ids.push(CLS);
    ids.extend(words.iter().map(|w| vocab.id(&w.to_lowercase())));
    let true_length = ids.len();
    ids.resize(max_len, PAD);
    Encoded {
        ids,
        true_length,
        words,
    }
}

/// Tokens at non-special positions, as stored in the vocabulary.
pub fn decode(encoded: &Encoded, vocab: &Vocabulary) -> Vec<String> {
    encoded.ids[1..encoded.true_length]
        .iter()
        .filter_map(|&id| vocab.token(id).map(str::to_string))
        .collect()
}
