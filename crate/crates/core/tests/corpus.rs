use std::collections::BTreeSet;

use ekg_core::corpus::{
    cluster_chapters, filter_passages, match_mentions, merge_passages, overlap_rate, Chapter, Comment, Entity,
    EntityKind, EntityLexicon, Novel, Passage, Span, Tokenization, MIN_COMMENTS,
};
use proptest::prelude::*;

fn passage(chapter: usize, start: usize, len: usize, tag: usize) -> Passage {
    Passage {
        id: format!("p{tag}"),
        chapter_index: chapter,
        span: Span::new(start, start + len),
        text: (start..start + len).map(|i| format!("t{i}")).collect(),
        entity_ids: BTreeSet::from([tag % 3]),
        comments: vec![Comment {
            text: vec![format!("c{tag}")],
            upvotes: tag as u64,
        }],
    }
}

fn intervals() -> impl Strategy<Value = Vec<Passage>> {
    prop::collection::vec((1usize..=3, 0usize..200, 1usize..60), 0..25).prop_map(|raw| {
        raw.into_iter()
            .enumerate()
            .map(|(k, (ch, start, len))| passage(ch, start, len, k))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

    #[test]
    fn merge_is_idempotent_and_leaves_no_heavy_overlap(input in intervals()) {
        let once = merge_passages(input.clone(), 0.5);
        let twice = merge_passages(once.clone(), 0.5);
        prop_assert_eq!(&once, &twice);
        for (a, p) in once.iter().enumerate() {
            for q in &once[a + 1..] {
                if p.chapter_index == q.chapter_index {
                    prop_assert!(overlap_rate(&p.span, &q.span) <= 0.5);
                }
            }
        }
        // Every input token stays covered by a passage of the same chapter.
        for p in &input {
            prop_assert!(once
                .iter()
                .any(|m| m.chapter_index == p.chapter_index && m.span.contains(&p.span)));
        }
        let comments_in: usize = input.iter().map(|p| p.comments.len()).sum();
        let comments_out: usize = once.iter().map(|p| p.comments.len()).sum();
        prop_assert_eq!(comments_in, comments_out);
        for m in &once {
            prop_assert_eq!(m.text.len(), m.span.len());
            let expected: Vec<String> = (m.span.start..m.span.end).map(|i| format!("t{i}")).collect();
            prop_assert_eq!(&m.text, &expected);
        }
    }

    #[test]
    fn filter_applies_predicates_exactly(
        raw in prop::collection::vec((0usize..3, prop::collection::vec(0u64..20, 0..12)), 0..20)
    ) {
        let input: Vec<Passage> = raw
            .iter()
            .enumerate()
            .map(|(k, (entities, votes))| Passage {
                id: format!("p{k}"),
                chapter_index: 1,
                span: Span::new(k * 10, k * 10 + 5),
                text: vec!["x".into(); 5],
                entity_ids: (0..*entities).collect(),
                comments: votes
                    .iter()
                    .enumerate()
                    .map(|(c, &v)| Comment { text: vec![format!("{k}.{c}")], upvotes: v })
                    .collect(),
            })
            .collect();
        let out = filter_passages(input.clone());
        let kept: Vec<&Passage> = input
            .iter()
            .filter(|p| !p.entity_ids.is_empty() && p.comments.len() >= 3)
            .collect();
        prop_assert_eq!(out.len(), kept.len());
        for (before, after) in kept.iter().zip(&out) {
            prop_assert_eq!(&before.id, &after.id);
            let n = before.comments.len();
            prop_assert_eq!(after.comments.len(), n - n / 5);
            prop_assert!(after.comments.len() >= MIN_COMMENTS - MIN_COMMENTS / 5);
            // The survivors are the highest-voted comments.
            let mut votes: Vec<u64> = before.comments.iter().map(|c| c.upvotes).collect();
            votes.sort_unstable_by(|a, b| b.cmp(a));
            let mut kept_votes: Vec<u64> = after.comments.iter().map(|c| c.upvotes).collect();
            kept_votes.sort_unstable_by(|a, b| b.cmp(a));
            prop_assert_eq!(&kept_votes[..], &votes[..n - n / 5]);
            for c in &after.comments {
                prop_assert!(before.comments.contains(c));
            }
        }
    }

    #[test]
    fn clustering_preserves_tokens_and_mentions(
        lengths in prop::collection::vec(1usize..40, 1..10),
        min_tokens in 1usize..80,
    ) {
        let novel = Novel {
            id: "n".into(),
            title: "n".into(),
            chapters: lengths
                .iter()
                .enumerate()
                .map(|(k, &n)| Chapter {
                    index: k + 1,
                    tokens: (0..n).map(|i| if i % 7 == 3 { "A".into() } else { format!("w{}", i % 5) }).collect(),
                    paragraph_starts: vec![0],
                    source_indices: vec![k + 1],
                })
                .collect(),
        };
        let lexicon = EntityLexicon {
            entities: vec![Entity { id: 0, name: "A".into(), aliases: vec![], kind: EntityKind::Person }],
        };
        let (merged, map) = cluster_chapters(&novel, min_tokens);
        prop_assert_eq!(merged.total_tokens(), novel.total_tokens());
        let sources: Vec<usize> = merged.chapters.iter().flat_map(|c| c.source_indices.clone()).collect();
        prop_assert_eq!(sources, (1..=lengths.len()).collect::<Vec<_>>());
        if merged.num_chapters() > 1 {
            prop_assert!(merged.chapters.iter().all(|c| c.len() >= min_tokens));
        }

        let before = match_mentions(&novel, &lexicon, Tokenization::Whitespace);
        let after = match_mentions(&merged, &lexicon, Tokenization::Whitespace);
        prop_assert_eq!(before.len(), after.len());
        let remapped: Vec<_> = before.into_iter().map(|m| map.remap_mention(m)).collect();
        prop_assert_eq!(remapped, after);
    }
}

#[test]
fn mentions_are_sorted_and_disjoint() {
    let chapter = |index: usize, text: &str| Chapter {
        index,
        tokens: text.split(' ').map(String::from).collect(),
        paragraph_starts: vec![0],
        source_indices: vec![index],
    };
    let novel = Novel {
        id: "n".into(),
        title: "n".into(),
        chapters: vec![
            chapter(1, "Lin Dai met Lin at the Jade Hall and Lin Dai left"),
            chapter(2, "Jade Hall Jade Lin Lin Dai"),
        ],
    };
    let lexicon = EntityLexicon {
        entities: vec![
            Entity {
                id: 0,
                name: "Lin Dai".into(),
                aliases: vec!["Lin".into()],
                kind: EntityKind::Person,
            },
            Entity {
                id: 1,
                name: "Jade Hall".into(),
                aliases: vec![],
                kind: EntityKind::Location,
            },
        ],
    };
    let ms = match_mentions(&novel, &lexicon, Tokenization::Whitespace);
    let mut sorted = ms.clone();
    sorted.sort();
    assert_eq!(ms, sorted);
    for w in ms.windows(2) {
        if w[0].chapter_index == w[1].chapter_index {
            assert!(w[0].span.end <= w[1].span.start, "{w:?}");
        }
    }
    let found: Vec<(usize, usize, usize)> = ms
        .iter()
        .map(|m| (m.chapter_index, m.span.start, m.entity_id))
        .collect();
    assert_eq!(
        found,
        vec![
            (1, 0, 0),
            (1, 3, 0),
            (1, 6, 1),
            (1, 9, 0),
            (2, 0, 1),
            (2, 3, 0),
            (2, 4, 0)
        ]
    );
    assert_eq!(ms[0].span.len(), 2);
    assert_eq!(ms[1].span.len(), 1);
}
