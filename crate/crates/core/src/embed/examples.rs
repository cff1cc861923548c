use rand::Rng;

use super::Triplet;
use crate::corpus::{Corpus, SpecialToken};
use crate::ekg::GlobalEKG;

/// A mention with its mention tokens replaced by a single mask token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VertexExample {
    pub t: usize,
    pub entity: usize,
    pub tokens: Vec<String>,
    pub mask_pos: usize,
}

/// One relation instance: a co-occurring pair and the paragraph holding it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeExample {
    pub t: usize,
    pub i: usize,
    pub j: usize,
    pub tokens: Vec<String>,
}

/// One example per mention, keeping up to `window` tokens of same-paragraph
/// context on each side.
pub fn vertex_examples(corpus: &Corpus, window: usize, paragraph_window: usize) -> Vec<VertexExample> {
    let mut out = Vec::with_capacity(corpus.mentions.len());
    for ch in &corpus.novel.chapters {
        let paragraphs = ch.paragraphs(paragraph_window);
        for m in corpus.mentions.iter().filter(|m| m.chapter_index == ch.index) {
            let Some(para) = paragraphs
                .iter()
                .find(|p| p.start <= m.span.start && m.span.start < p.end)
            else {
                continue;
            };
            let left = m.span.start.saturating_sub(window).max(para.start);
            let right = (m.span.end + window).min(para.end).max(m.span.end);
            let mut tokens: Vec<String> = ch.tokens[left..m.span.start].to_vec();
            let mask_pos = tokens.len();
            tokens.push(SpecialToken::Mask.text().to_string());
            tokens.extend_from_slice(&ch.tokens[m.span.end.min(ch.len())..right.min(ch.len())]);
            out.push(VertexExample {
                t: ch.index,
                entity: m.entity_id,
                tokens,
                mask_pos,
            });
        }
    }
    out
}

/// One example per relation instance, in chapter then pair order.
pub fn edge_examples(corpus: &Corpus, ekg: &GlobalEKG, max_tokens: usize) -> Vec<EdgeExample> {
    let mut out = Vec::new();
    for g in &ekg.graphs {
        let Some(ch) = corpus.novel.chapter(g.t) else {
            continue;
        };
        for e in &g.edges {
            for span in &e.evidence {
                let end = span.end.min(span.start + max_tokens).min(ch.len());
                out.push(EdgeExample {
                    t: g.t,
                    i: e.i,
                    j: e.j,
                    tokens: ch.tokens[span.start..end].to_vec(),
                });
            }
        }
    }
    out
}

/// Draws one negative `k` per example, uniformly from the chapter's vertices
/// other than `i` and `j` that are not linked to `i`. Returns the triplets,
/// the index of the example each came from, and the number of examples
/// skipped for lack of a valid negative.
pub fn sample_negatives(
    ekg: &GlobalEKG,
    examples: &[EdgeExample],
    rng: &mut impl Rng,
) -> (Vec<Triplet>, Vec<usize>, usize) {
    let mut triplets = Vec::with_capacity(examples.len());
    let mut kept = Vec::with_capacity(examples.len());
    let mut skipped = 0;
    for (n, ex) in examples.iter().enumerate() {
        let Some(g) = ekg.graph(ex.t) else {
            skipped += 1;
            continue;
        };
        let candidates: Vec<usize> = g
            .vertices
            .iter()
            .copied()
            .filter(|&k| k != ex.i && k != ex.j && !g.has_edge(ex.i, k))
            .collect();
        if candidates.is_empty() {
            skipped += 1;
            continue;
        }
        let k = candidates[rng.gen_range(0..candidates.len())];
        triplets.push(Triplet {
            t: ex.t,
            i: ex.i,
            j: ex.j,
            k,
        });
        kept.push(n);
    }
    (triplets, kept, skipped)
}
