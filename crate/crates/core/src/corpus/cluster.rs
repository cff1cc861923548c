use serde::{Deserialize, Serialize};

use super::{Chapter, Mention, Novel, Passage, Span};

/// Where each original chapter landed after clustering: entry `k` holds the
/// new 1-based index and token offset of original chapter `k + 1`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChapterMap {
    pub targets: Vec<(usize, usize)>,
}

impl ChapterMap {
    pub fn identity(novel: &Novel) -> Self {
        Self {
            targets: (1..=novel.num_chapters()).map(|i| (i, 0)).collect(),
        }
    }

    pub fn locate(&self, original: usize, span: Span) -> (usize, Span) {
        let (index, offset) = self.targets[original - 1];
        (index, Span::new(span.start + offset, span.end + offset))
    }

    pub fn remap_passage(&self, mut p: Passage) -> Passage {
        let (index, span) = self.locate(p.chapter_index, p.span);
        p.chapter_index = index;
        p.span = span;
        p
    }

    pub fn remap_mention(&self, m: Mention) -> Mention {
        let (chapter_index, span) = self.locate(m.chapter_index, m.span);
        Mention {
            chapter_index,
            span,
            ..m
        }
    }
}

/// Greedy left-to-right merge of consecutive chapters until each holds at
/// least `min_tokens`; a short trailing group is folded into its
/// predecessor. Chapter boundaries become paragraph breaks.
pub fn cluster_chapters(novel: &Novel, min_tokens: usize) -> (Novel, ChapterMap) {
    let mut groups: Vec<Vec<&Chapter>> = Vec::new();
    let mut current: Vec<&Chapter> = Vec::new();
    let mut size = 0;
    for ch in &novel.chapters {
        current.push(ch);
        size += ch.len();
        if size >= min_tokens {
            groups.push(std::mem::take(&mut current));
            size = 0;
        }
    }
    if !current.is_empty() {
        match groups.last_mut() {
            Some(last) => last.extend(current),
            None => groups.push(current),
        }
    }

    let mut map = ChapterMap {
        targets: vec![(0, 0); novel.num_chapters()],
    };
    let chapters = groups
        .into_iter()
        .enumerate()
        .map(|(g, members)| {
            let index = g + 1;
            let mut merged = Chapter {
                index,
                tokens: Vec::new(),
                paragraph_starts: Vec::new(),
                source_indices: Vec::new(),
            };
            for ch in members {
                let offset = merged.tokens.len();
                map.targets[ch.index - 1] = (index, offset);
                merged
                    .paragraph_starts
                    .extend(ch.paragraph_starts.iter().map(|s| s + offset));
                merged.tokens.extend(ch.tokens.iter().cloned());
                merged.source_indices.extend(&ch.source_indices);
            }
            merged
        })
        .collect();
    (
        Novel {
            id: novel.id.clone(),
            title: novel.title.clone(),
            chapters,
        },
        map,
    )
}
