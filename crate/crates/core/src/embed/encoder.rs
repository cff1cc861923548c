use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{SpecialToken, Vocabulary};
use crate::diffkit::attention::TransformerEncoderLayer;
use crate::diffkit::nn::{sinusoidal_positions, Embedding, LayerNorm};
use crate::diffkit::{DiffError, Float, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    /// Frozen hashed bag of character n-grams.
    Hashed,
    /// Small self-attention stack trained with the vertex loss.
    Attention,
}

/// Sentence features without parameters: signed feature hashing of
/// character unigrams and bigrams, L2-normalised.
///
/// For masked sentences each n-gram is tagged with its side of the mask and
/// weighted by `1 / (1 + distance)`, so nearby context dominates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashedEncoder {
    pub dim: usize,
}

fn fnv1a(parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in parts {
        for b in p.bytes().chain(std::iter::once(0xff)) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

impl HashedEncoder {
    fn add(&self, out: &mut [f64], parts: &[&str], weight: f64) {
        let h = fnv1a(parts);
        let bucket = (h % self.dim as u64) as usize;
        let sign = if (h >> 63) == 1 { -1.0 } else { 1.0 };
        out[bucket] += sign * weight;
    }

    fn normalise(mut v: Vec<f64>) -> Vec<f64> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }

    pub fn masked(&self, tokens: &[String], mask_pos: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (p, tok) in tokens.iter().enumerate() {
            if p == mask_pos {
                continue;
            }
            let (side, dist) = if p < mask_pos {
                ("L", mask_pos - p)
            } else {
                ("R", p - mask_pos)
            };
            let w = 1.0 / (1.0 + dist as f64);
            self.add(&mut out, &[side, "1", tok], w);
            // bigrams never straddle the mask
            if let Some(next) = tokens.get(p + 1) {
                if p + 1 != mask_pos {
                    self.add(&mut out, &[side, "2", tok, next], w);
                }
            }
            if dist == 1 {
                self.add(&mut out, &[side, "adj", tok], 1.0);
            }
        }
        Self::normalise(out)
    }

    pub fn cls(&self, tokens: &[String]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (p, tok) in tokens.iter().enumerate() {
            self.add(&mut out, &["1", tok], 1.0);
            if let Some(next) = tokens.get(p + 1) {
                self.add(&mut out, &["2", tok, next], 1.0);
            }
        }
        Self::normalise(out)
    }
}

/// Token embedding, sinusoidal positions, pre-norm self-attention layers
/// and a final layer norm.
#[derive(Clone, Debug)]
pub struct AttentionEncoder {
    pub vocab: Vocabulary,
    pub embedding: Embedding,
    pub layers: Vec<TransformerEncoderLayer>,
    pub norm: LayerNorm,
    pub dim: usize,
}

impl AttentionEncoder {
    pub fn new<F: Float>(
        store: &mut ParamStore<F>,
        vocab: Vocabulary,
        dim: usize,
        layers: usize,
        heads: usize,
        rng: &mut impl Rng,
    ) -> Result<Self, DiffError> {
        let embedding = Embedding::new(store, "encoder.embedding", vocab.len(), dim, rng);
        let layers = (0..layers)
            .map(|l| TransformerEncoderLayer::new(store, &format!("encoder.layer{l}"), dim, heads, 2 * dim, rng))
            .collect::<Result<Vec<_>, _>>()?;
        let norm = LayerNorm::new(store, "encoder.ln_out", dim);
        Ok(Self {
            vocab,
            embedding,
            layers,
            norm,
            dim,
        })
    }

    /// One output row per input token.
    pub fn encode<'g, F: Float>(&self, tape: &'g Tape<'g, F>, tokens: &[String]) -> Result<Var<'g, F>, DiffError> {
        if tokens.is_empty() {
            return Err(DiffError::Contract("cannot encode an empty sentence".into()));
        }
        let ids = self.vocab.encode(tokens);
        let scale = F::lit((self.dim as f64).sqrt());
        let mut x = self
            .embedding
            .forward(tape, &ids)?
            .scale(scale)
            .add(tape.constant(sinusoidal_positions(ids.len(), self.dim)))?;
        for layer in &self.layers {
            x = layer.forward(x, None)?;
        }
        self.norm.forward(x)
    }
}

#[derive(Clone, Debug)]
pub enum SentenceEncoder {
    Hashed(HashedEncoder),
    Attention(AttentionEncoder),
}

impl SentenceEncoder {
    pub fn kind(&self) -> EncoderKind {
        match self {
            SentenceEncoder::Hashed(_) => EncoderKind::Hashed,
            SentenceEncoder::Attention(_) => EncoderKind::Attention,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SentenceEncoder::Hashed(h) => h.dim,
            SentenceEncoder::Attention(a) => a.dim,
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, SentenceEncoder::Attention(_))
    }

    /// Feature of the masked position, `[1, dim]`. `tokens[mask_pos]` is
    /// expected to be the mask token.
    pub fn encode_masked<'g, F: Float>(
        &self,
        tape: &'g Tape<'g, F>,
        tokens: &[String],
        mask_pos: usize,
    ) -> Result<Var<'g, F>, DiffError> {
        if mask_pos >= tokens.len() {
            return Err(DiffError::Contract(format!(
                "mask position {mask_pos} outside a sentence of {} tokens",
                tokens.len()
            )));
        }
        match self {
            SentenceEncoder::Hashed(h) => Ok(tape.constant(row(h.masked(tokens, mask_pos)))),
            SentenceEncoder::Attention(a) => a.encode(tape, tokens)?.slice_rows(mask_pos, mask_pos + 1),
        }
    }

    /// Sentence-level feature, `[1, dim]`; the attention encoder reads the
    /// state of a prepended CLS token.
    pub fn encode_cls<'g, F: Float>(&self, tape: &'g Tape<'g, F>, tokens: &[String]) -> Result<Var<'g, F>, DiffError> {
        match self {
            SentenceEncoder::Hashed(h) => Ok(tape.constant(row(h.cls(tokens)))),
            SentenceEncoder::Attention(a) => {
                let mut with_cls = Vec::with_capacity(tokens.len() + 1);
                with_cls.push(SpecialToken::Cls.text().to_string());
                with_cls.extend_from_slice(tokens);
                a.encode(tape, &with_cls)?.slice_rows(0, 1)
            }
        }
    }

    pub fn encode_masked_batch<'g, F: Float>(
        &self,
        tape: &'g Tape<'g, F>,
        sentences: &[(&[String], usize)],
    ) -> Result<Var<'g, F>, DiffError> {
        match self {
            SentenceEncoder::Hashed(h) => {
                Ok(tape.constant(rows(sentences.iter().map(|(t, m)| h.masked(t, *m)), h.dim)))
            }
            SentenceEncoder::Attention(_) => {
                let parts = sentences
                    .iter()
                    .map(|(t, m)| self.encode_masked(tape, t, *m))
                    .collect::<Result<Vec<_>, _>>()?;
                Var::concat_rows(&parts)
            }
        }
    }

    pub fn encode_cls_batch<'g, F: Float>(
        &self,
        tape: &'g Tape<'g, F>,
        sentences: &[&[String]],
    ) -> Result<Var<'g, F>, DiffError> {
        match self {
            SentenceEncoder::Hashed(h) => Ok(tape.constant(rows(sentences.iter().map(|t| h.cls(t)), h.dim))),
            SentenceEncoder::Attention(_) => {
                let parts = sentences
                    .iter()
                    .map(|t| self.encode_cls(tape, t))
                    .collect::<Result<Vec<_>, _>>()?;
                Var::concat_rows(&parts)
            }
        }
    }
}

fn row<F: Float>(v: Vec<f64>) -> Tensor<F> {
    let n = v.len();
    Tensor::new(vec![1, n], v.into_iter().map(F::lit).collect()).expect("row shape")
}

fn rows<F: Float>(it: impl Iterator<Item = Vec<f64>>, dim: usize) -> Tensor<F> {
    let data: Vec<F> = it.flat_map(|r| r.into_iter().map(F::lit)).collect();
    let n = data.len() / dim.max(1);
    Tensor::new(vec![n, dim], data).expect("rows shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.chars().map(String::from).collect()
    }

    #[test]
    fn hashed_features_are_unit_norm_and_deterministic() {
        let h = HashedEncoder { dim: 32 };
        let a = h.masked(&toks("甲与乙同行"), 0);
        let b = h.masked(&toks("甲与乙同行"), 0);
        assert_eq!(a, b);
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn masked_token_is_ignored() {
        let h = HashedEncoder { dim: 32 };
        assert_eq!(h.masked(&toks("甲与乙"), 0), h.masked(&toks("丙与乙"), 0));
    }

    #[test]
    fn context_side_matters() {
        let h = HashedEncoder { dim: 64 };
        assert_ne!(h.masked(&toks("甲乙"), 0), h.masked(&toks("乙甲"), 1));
    }
}
