//! Corpus ingestion: novels, entity lexicons and commented passages, with
//! chapter clustering, lexicon mention matching, passage merging/filtering
//! and the character vocabulary.

mod cluster;
mod load;
mod mentions;
mod passages;
mod tokenize;
mod vocab;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use cluster::{cluster_chapters, ChapterMap};
pub use load::{load_corpus, load_lexicon, load_novel, load_passages, parse_lexicon, parse_novel, parse_passages};
pub use mentions::{attach_entities, match_mentions};
pub use passages::{filter_passages, merge_passages, overlap_rate, MIN_COMMENTS};
pub use tokenize::Tokenization;
pub use vocab::{build_vocab, SpecialToken, Vocabulary};

/// Half-open token range `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn intersection(&self, other: &Span) -> usize {
        self.end.min(other.end).saturating_sub(self.start.max(other.start))
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn union(&self, other: &Span) -> Span {
        Span::new(self.start.min(other.start), self.end.max(other.end))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chapter {
    /// 1-based ordinal.
    pub index: usize,
    pub tokens: Vec<String>,
    /// Token offsets where paragraphs begin; always starts with 0.
    pub paragraph_starts: Vec<usize>,
    /// Original chapter ordinals merged into this chapter.
    pub source_indices: Vec<usize>,
}

impl Chapter {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Paragraph spans. A chapter without separators is cut into windows of
    /// `window` tokens.
    pub fn paragraphs(&self, window: usize) -> Vec<Span> {
        let n = self.tokens.len();
        if n == 0 {
            return Vec::new();
        }
        if self.paragraph_starts.len() <= 1 {
            let w = window.max(1);
            return (0..n).step_by(w).map(|s| Span::new(s, (s + w).min(n))).collect();
        }
        let mut spans = Vec::with_capacity(self.paragraph_starts.len());
        for (k, &s) in self.paragraph_starts.iter().enumerate() {
            let e = self.paragraph_starts.get(k + 1).copied().unwrap_or(n);
            if e > s {
                spans.push(Span::new(s, e));
            }
        }
        spans
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Novel {
    pub id: String,
    pub title: String,
    pub chapters: Vec<Chapter>,
}

impl Novel {
    /// Number of chapters (time steps).
    pub fn num_chapters(&self) -> usize {
        self.chapters.len()
    }

    pub fn chapter(&self, index: usize) -> Option<&Chapter> {
        index.checked_sub(1).and_then(|i| self.chapters.get(i))
    }

    pub fn total_tokens(&self) -> usize {
        self.chapters.iter().map(Chapter::len).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Person,
    Organization,
    Location,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: usize,
    pub name: String,
    pub aliases: Vec<String>,
    pub kind: EntityKind,
}

impl Entity {
    /// Canonical name followed by the aliases, without duplicates.
    pub fn surface_forms(&self) -> Vec<&str> {
        let mut forms = vec![self.name.as_str()];
        for a in &self.aliases {
            if !forms.contains(&a.as_str()) {
                forms.push(a);
            }
        }
        forms
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EntityLexicon {
    pub entities: Vec<Entity>,
}

impl EntityLexicon {
    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mention {
    pub chapter_index: usize,
    pub span: Span,
    pub entity_id: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comment {
    pub text: Vec<String>,
    pub upvotes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub chapter_index: usize,
    pub span: Span,
    pub text: Vec<String>,
    pub entity_ids: BTreeSet<usize>,
    pub comments: Vec<Comment>,
}

/// Tunables of corpus preparation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub min_chapter_tokens: usize,
    pub overlap_threshold: f64,
    pub min_freq: usize,
    pub tokenization: Tokenization,
    pub paragraph_window: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            min_chapter_tokens: 1000,
            overlap_threshold: 0.5,
            min_freq: 1,
            tokenization: Tokenization::Char,
            paragraph_window: 100,
        }
    }
}

/// A fully prepared corpus: clustered chapters, matched mentions and the
/// merged and filtered passages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub novel: Novel,
    pub lexicon: EntityLexicon,
    pub mentions: Vec<Mention>,
    pub passages: Vec<Passage>,
    pub chapter_map: ChapterMap,
}

impl Corpus {
    /// Cluster, match, attach, merge, filter, in that order.
    pub fn prepare(novel: Novel, lexicon: EntityLexicon, passages: Vec<Passage>, config: &CorpusConfig) -> Self {
        let (novel, chapter_map) = cluster_chapters(&novel, config.min_chapter_tokens);
        let mentions = match_mentions(&novel, &lexicon, config.tokenization);
        let mut passages: Vec<Passage> = passages.into_iter().map(|p| chapter_map.remap_passage(p)).collect();
        attach_entities(&mut passages, &mentions);
        passages.sort_by_key(|p| (p.chapter_index, p.span.start, p.span.end));
        let passages = merge_passages(passages, config.overlap_threshold);
        let passages = filter_passages(passages);
        Self {
            novel,
            lexicon,
            mentions,
            passages,
            chapter_map,
        }
    }
}
