use std::collections::{BTreeMap, BTreeSet};

use ekg_core::corpus::{Chapter, Mention, Novel, Passage, Span};
use ekg_core::ekg::{build_global_ekg, extract_local_ekg, GlobalEKG};
use proptest::prelude::*;

/// Paragraph sizes per chapter plus mentions as (chapter, token, entity).
type Fixture = (Vec<Vec<usize>>, Vec<(usize, usize, usize)>);

fn fixture() -> impl Strategy<Value = Fixture> {
    prop::collection::vec(prop::collection::vec(1usize..6, 1..5), 1..4).prop_flat_map(|chapters| {
        let sizes: Vec<usize> = chapters.iter().map(|p| p.iter().sum()).collect();
        let mention = (0..sizes.len()).prop_flat_map(move |c| (Just(c + 1), 0..sizes[c], 0usize..7));
        (Just(chapters), prop::collection::vec(mention, 0..30))
    })
}

fn build(paragraphs: &[Vec<usize>], raw: &[(usize, usize, usize)]) -> (Novel, Vec<Mention>) {
    let chapters = paragraphs
        .iter()
        .enumerate()
        .map(|(c, sizes)| {
            let starts: Vec<usize> = sizes
                .iter()
                .scan(0, |acc, s| {
                    let here = *acc;
                    *acc += s;
                    Some(here)
                })
                .collect();
            Chapter {
                index: c + 1,
                tokens: vec!["x".into(); sizes.iter().sum()],
                paragraph_starts: starts,
                source_indices: vec![c + 1],
            }
        })
        .collect();
    let mut mentions: Vec<Mention> = raw
        .iter()
        .map(|&(chapter_index, at, entity_id)| Mention {
            chapter_index,
            span: Span::new(at, at + 1),
            entity_id,
        })
        .collect();
    mentions.sort();
    mentions.dedup_by_key(|m| (m.chapter_index, m.span));
    (
        Novel {
            id: "n".into(),
            title: "n".into(),
            chapters,
        },
        mentions,
    )
}

/// Which paragraph of `sizes` holds token `at`.
fn paragraph_of(sizes: &[usize], at: usize) -> usize {
    let mut end = 0;
    for (k, s) in sizes.iter().enumerate() {
        end += s;
        if at < end {
            return k;
        }
    }
    unreachable!("token outside chapter")
}

/// Recounts every (chapter, pair) from scratch: the number of paragraphs in
/// which both entities are mentioned.
fn recount(paragraphs: &[Vec<usize>], mentions: &[Mention]) -> BTreeMap<(usize, usize, usize), usize> {
    let mut out = BTreeMap::new();
    for (c, sizes) in paragraphs.iter().enumerate() {
        for p in 0..sizes.len() {
            for i in 0..7 {
                for j in i + 1..7 {
                    let seen = |e: usize| {
                        mentions.iter().any(|m| {
                            m.chapter_index == c + 1 && m.entity_id == e && paragraph_of(sizes, m.span.start) == p
                        })
                    };
                    if seen(i) && seen(j) {
                        *out.entry((c + 1, i, j)).or_insert(0) += 1;
                    }
                }
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 300, ..ProptestConfig::default() })]

    #[test]
    fn edges_match_brute_force_recount((paragraphs, raw) in fixture()) {
        let (novel, mentions) = build(&paragraphs, &raw);
        let g = build_global_ekg(&novel, &mentions, 7, 100);
        prop_assert_eq!(g.num_steps(), paragraphs.len());

        let mut got = BTreeMap::new();
        for kg in &g.graphs {
            for e in &kg.edges {
                prop_assert!(e.i < e.j);
                got.insert((kg.t, e.i, e.j), e.evidence.len());
            }
            let expected: BTreeSet<usize> = mentions
                .iter()
                .filter(|m| m.chapter_index == kg.t)
                .map(|m| m.entity_id)
                .collect();
            prop_assert_eq!(kg.vertices.clone(), expected.into_iter().collect::<Vec<_>>());
        }
        let expected = recount(&paragraphs, &mentions);
        prop_assert_eq!(g.num_relation_instances(), expected.values().sum::<usize>());
        prop_assert_eq!(got, expected);

        let mut freq = vec![0; 7];
        for m in &mentions {
            freq[m.entity_id] += 1;
        }
        prop_assert_eq!(&g.entity_frequency, &freq);
    }

    #[test]
    fn local_graph_respects_k_and_union_edges(
        (paragraphs, raw) in fixture(),
        seeds in prop::collection::btree_set(0usize..7, 0..7),
        k in 1usize..6,
    ) {
        let (novel, mentions) = build(&paragraphs, &raw);
        let g = build_global_ekg(&novel, &mentions, 7, 100);
        let passage = Passage {
            id: "p".into(),
            chapter_index: 1,
            span: Span::new(0, 1),
            text: vec!["x".into()],
            entity_ids: seeds.clone(),
            comments: vec![],
        };
        let local = extract_local_ekg(&g, &passage, k);
        prop_assert!(local.num_vertices() <= k);
        let distinct: BTreeSet<usize> = local.entity_ids.iter().copied().collect();
        prop_assert_eq!(distinct.len(), local.num_vertices());
        if seeds.len() >= k {
            prop_assert!(local.entity_ids.iter().all(|e| seeds.contains(e)));
        } else {
            prop_assert!(seeds.iter().all(|e| local.entity_ids.contains(e)));
        }
        for &(i, j) in &local.edges {
            prop_assert!(i < j);
            prop_assert!(local.complete_fallback || cooccur(&g, i, j));
        }
        if !local.complete_fallback {
            let expected = local
                .entity_ids
                .iter()
                .enumerate()
                .flat_map(|(a, &x)| local.entity_ids[a + 1..].iter().map(move |&y| (x, y)))
                .filter(|&(x, y)| cooccur(&g, x, y))
                .count();
            prop_assert_eq!(local.num_edges(), expected);
        } else {
            let n = local.num_vertices();
            prop_assert_eq!(local.num_edges(), n * (n - 1) / 2);
        }
    }
}

fn cooccur(g: &GlobalEKG, a: usize, b: usize) -> bool {
    g.graphs
        .iter()
        .any(|kg| kg.edges.iter().any(|e| (e.i, e.j) == (a.min(b), a.max(b))))
}
