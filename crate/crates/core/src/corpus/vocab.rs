use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Corpus;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpecialToken {
    Pad,
    Bos,
    Eos,
    Unk,
    Mask,
    Cls,
}

impl SpecialToken {
    pub const ALL: [SpecialToken; 6] = [
        SpecialToken::Pad,
        SpecialToken::Bos,
        SpecialToken::Eos,
        SpecialToken::Unk,
        SpecialToken::Mask,
        SpecialToken::Cls,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn text(self) -> &'static str {
        match self {
            SpecialToken::Pad => "<pad>",
            SpecialToken::Bos => "<bos>",
            SpecialToken::Eos => "<eos>",
            SpecialToken::Unk => "<unk>",
            SpecialToken::Mask => "<mask>",
            SpecialToken::Cls => "<cls>",
        }
    }
}

/// Dense token ids; the six special tokens occupy ids 0..6.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    pub const PAD: usize = 0;
    pub const BOS: usize = 1;
    pub const EOS: usize = 2;
    pub const UNK: usize = 3;
    pub const MASK: usize = 4;
    pub const CLS: usize = 5;

    /// Specials followed by the token counts ordered by frequency descending
    /// then token ascending, keeping counts of at least `min_freq`.
    pub fn from_counts(counts: &BTreeMap<String, usize>, min_freq: usize) -> Self {
        let mut kept: Vec<(&String, usize)> = counts
            .iter()
            .filter(|(t, &c)| c >= min_freq.max(1) && !SpecialToken::ALL.iter().any(|s| s.text() == *t))
            .map(|(t, &c)| (t, c))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let tokens = SpecialToken::ALL
            .iter()
            .map(|s| s.text().to_string())
            .chain(kept.into_iter().map(|(t, _)| t.clone()))
            .collect::<Vec<_>>();
        tokens.into()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or(SpecialToken::Unk.text(), String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// Drops padding, BOS and EOS.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .filter(|&&i| !matches!(i, Self::PAD | Self::BOS | Self::EOS))
            .map(|&i| self.token(i).to_string())
            .collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Hex SHA-256 of the id order.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }
}

/// Vocabulary over chapter text and comment text.
pub fn build_vocab(corpus: &Corpus, min_freq: usize) -> Vocabulary {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let chapter_tokens = corpus.novel.chapters.iter().flat_map(|c| c.tokens.iter());
    let comment_tokens = corpus
        .passages
        .iter()
        .flat_map(|p| p.comments.iter())
        .flat_map(|c| c.text.iter());
    for t in chapter_tokens.chain(comment_tokens) {
        *counts.entry(t.clone()).or_default() += 1;
    }
    Vocabulary::from_counts(&counts, min_freq)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(pairs: &[(&str, usize)]) -> BTreeMap<String, usize> {
        pairs.iter().map(|(t, c)| (t.to_string(), *c)).collect()
    }

    #[test]
    fn ids_ordered_by_frequency_then_token() {
        let v = Vocabulary::from_counts(&counts(&[("b", 2), ("a", 2), ("c", 5)]), 1);
        assert_eq!(&v.tokens()[6..], &["c", "a", "b"]);
        assert_eq!(v.id("c"), 6);
    }

    #[test]
    fn special_ids_are_fixed_and_distinct() {
        let v = Vocabulary::from_counts(&BTreeMap::new(), 1);
        for s in SpecialToken::ALL {
            assert_eq!(v.id(s.text()), s.id());
        }
        assert_eq!(v.len(), 6);
    }

    #[test]
    fn rare_tokens_encode_as_unk() {
        let v = Vocabulary::from_counts(&counts(&[("x", 1), ("y", 3)]), 2);
        assert_eq!(v.encode(&["x", "y"]), vec![Vocabulary::UNK, 6]);
    }

    #[test]
    fn serde_round_trip_rebuilds_index() {
        let v = Vocabulary::from_counts(&counts(&[("x", 1)]), 1);
        let back: Vocabulary = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(back.id("x"), 6);
    }
}
