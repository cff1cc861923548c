use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;

/// Dataset summary in the shape of a Table-1 style report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub novels: usize,
    pub passages: usize,
    pub comments: usize,
    pub avg_entities_per_passage: f64,
    pub avg_relations_per_passage: f64,
    pub avg_comments_per_passage: f64,
}

fn mean(total: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        total as f64 / n as f64
    }
}

/// Relations of a passage are the distinct entity pairs mentioned together
/// in one paragraph inside the passage span.
pub fn report_stats(corpus: &Corpus, paragraph_window: usize) -> StatsReport {
    let passages = &corpus.passages;
    let comments: usize = passages.iter().map(|p| p.comments.len()).sum();
    let entities: usize = passages.iter().map(|p| p.entity_ids.len()).sum();
    let mut relations = 0;
    for p in passages {
        let Some(ch) = corpus.novel.chapter(p.chapter_index) else {
            continue;
        };
        let mut pairs = BTreeSet::new();
        for para in ch.paragraphs(paragraph_window) {
            let lo = para.start.max(p.span.start);
            let hi = para.end.min(p.span.end);
            if lo >= hi {
                continue;
            }
            let present: BTreeSet<usize> = corpus
                .mentions
                .iter()
                .filter(|m| m.chapter_index == p.chapter_index && lo <= m.span.start && m.span.end <= hi)
                .map(|m| m.entity_id)
                .collect();
            let present: Vec<usize> = present.into_iter().collect();
            for (a, &i) in present.iter().enumerate() {
                for &j in &present[a + 1..] {
                    pairs.insert((i, j));
                }
            }
        }
        relations += pairs.len();
    }
    StatsReport {
        novels: usize::from(!corpus.novel.chapters.is_empty()),
        passages: passages.len(),
        comments,
        avg_entities_per_passage: mean(entities, passages.len()),
        avg_relations_per_passage: mean(relations, passages.len()),
        avg_comments_per_passage: mean(comments, passages.len()),
    }
}

impl fmt::Display for StatsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = [
            ("# novels", self.novels.to_string()),
            ("# passages", self.passages.to_string()),
            ("# comments", self.comments.to_string()),
            (
                "avg # entities per passage",
                format!("{:.2}", self.avg_entities_per_passage),
            ),
            (
                "avg # relations per passage",
                format!("{:.2}", self.avg_relations_per_passage),
            ),
            (
                "avg # comments per passage",
                format!("{:.2}", self.avg_comments_per_passage),
            ),
        ];
        for (k, v) in rows {
            writeln!(f, "{k:<30}{v:>10}")?;
        }
        Ok(())
    }
}
