//! Evolutionary knowledge graphs: one co-occurrence graph per chapter, and
//! the passage-local sub-graph sequence consumed by the generator.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::corpus::{Mention, Novel, Passage, Span};
use crate::diffkit::Tensor;

/// Default number of entities kept in a local graph.
pub const DEFAULT_K: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    /// Paragraphs in which both endpoints are mentioned.
    pub evidence: Vec<Span>,
}

/// The graph of a single chapter.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalKG {
    pub t: usize,
    /// Sorted entity ids mentioned in the chapter.
    pub vertices: Vec<usize>,
    /// Sorted by `(i, j)` with `i < j`.
    pub edges: Vec<Edge>,
}

impl TemporalKG {
    pub fn has_vertex(&self, v: usize) -> bool {
        self.vertices.binary_search(&v).is_ok()
    }

    pub fn edge(&self, a: usize, b: usize) -> Option<&Edge> {
        let key = (a.min(b), a.max(b));
        self.edges
            .binary_search_by(|e| (e.i, e.j).cmp(&key))
            .ok()
            .map(|k| &self.edges[k])
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edge(a, b).is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalEKG {
    pub novel_id: String,
    pub num_entities: usize,
    pub graphs: Vec<TemporalKG>,
    /// Total mention count per entity id.
    pub entity_frequency: Vec<usize>,
}

impl GlobalEKG {
    /// Number of chapters `T`.
    pub fn num_steps(&self) -> usize {
        self.graphs.len()
    }

    /// Graph of 1-based chapter `t`.
    pub fn graph(&self, t: usize) -> Option<&TemporalKG> {
        t.checked_sub(1).and_then(|k| self.graphs.get(k))
    }

    /// Total relation instances: every (paragraph, pair) co-occurrence.
    pub fn num_relation_instances(&self) -> usize {
        self.graphs
            .iter()
            .flat_map(|g| &g.edges)
            .map(|e| e.evidence.len())
            .sum()
    }

    pub fn num_edges(&self) -> usize {
        self.graphs.iter().map(|g| g.edges.len()).sum()
    }

    /// Adjacency of the union graph over all chapters.
    pub fn union_adjacency(&self) -> BTreeMap<usize, BTreeSet<usize>> {
        let mut adj: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for e in self.graphs.iter().flat_map(|g| &g.edges) {
            adj.entry(e.i).or_default().insert(e.j);
            adj.entry(e.j).or_default().insert(e.i);
        }
        adj
    }

    pub fn cooccur_anywhere(&self, a: usize, b: usize) -> bool {
        self.graphs.iter().any(|g| g.has_edge(a, b))
    }

    fn frequency(&self, v: usize) -> usize {
        self.entity_frequency.get(v).copied().unwrap_or(0)
    }

    /// Sorts ids by frequency descending, then id ascending.
    fn rank(&self, ids: &mut [usize]) {
        ids.sort_by(|&a, &b| self.frequency(b).cmp(&self.frequency(a)).then(a.cmp(&b)));
    }

    /// `{"T", "vertices", "edges"}` with one entry per chapter.
    pub fn topology_json(&self) -> Value {
        json!({
            "T": self.num_steps(),
            "vertices": self.graphs.iter().map(|g| g.vertices.clone()).collect::<Vec<_>>(),
            "edges": self
                .graphs
                .iter()
                .map(|g| g.edges.iter().map(|e| [e.i, e.j]).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
        })
    }
}

/// Builds one graph per chapter. Two entities are linked in chapter `t` when
/// some paragraph of `t` mentions both. `paragraph_window` is the fallback
/// paragraph size for chapters without separators.
pub fn build_global_ekg(
    novel: &Novel,
    mentions: &[Mention],
    num_entities: usize,
    paragraph_window: usize,
) -> GlobalEKG {
    let mut entity_frequency = vec![0usize; num_entities];
    let mut by_chapter: BTreeMap<usize, Vec<&Mention>> = BTreeMap::new();
    for m in mentions {
        if let Some(f) = entity_frequency.get_mut(m.entity_id) {
            *f += 1;
        }
        by_chapter.entry(m.chapter_index).or_default().push(m);
    }

    let graphs = novel
        .chapters
        .iter()
        .map(|ch| {
            let ms = by_chapter.get(&ch.index).map(Vec::as_slice).unwrap_or(&[]);
            let vertices: BTreeSet<usize> = ms.iter().map(|m| m.entity_id).collect();
            let mut edges: BTreeMap<(usize, usize), Vec<Span>> = BTreeMap::new();
            for para in ch.paragraphs(paragraph_window) {
                let present: BTreeSet<usize> = ms
                    .iter()
                    .filter(|m| para.start <= m.span.start && m.span.start < para.end)
                    .map(|m| m.entity_id)
                    .collect();
                let present: Vec<usize> = present.into_iter().collect();
                for (a, &i) in present.iter().enumerate() {
                    for &j in &present[a + 1..] {
                        edges.entry((i, j)).or_default().push(para);
                    }
                }
            }
            TemporalKG {
                t: ch.index,
                vertices: vertices.into_iter().collect(),
                edges: edges
                    .into_iter()
                    .map(|((i, j), evidence)| Edge { i, j, evidence })
                    .collect(),
            }
        })
        .collect();

    GlobalEKG {
        novel_id: novel.id.clone(),
        num_entities,
        graphs,
        entity_frequency,
    }
}

/// The sub-graph sequence around one passage. Embedding sequences are empty
/// until filled by [`crate::embed::materialize_embeddings`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalEKG {
    pub passage_id: String,
    /// 1-based chapter of the passage.
    pub t: usize,
    pub entity_ids: Vec<usize>,
    /// Entity-id pairs with `i < j`.
    pub edges: Vec<(usize, usize)>,
    /// True when no selected pair co-occurs and the edges form a complete graph.
    pub complete_fallback: bool,
    /// One `[c_e, d]` tensor per chapter.
    #[serde(skip)]
    pub vertex_embeddings: Vec<Tensor<f32>>,
    /// One `[c_r, d]` tensor per chapter.
    #[serde(skip)]
    pub edge_embeddings: Vec<Tensor<f32>>,
}

impl LocalEKG {
    pub fn num_vertices(&self) -> usize {
        self.entity_ids.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edge endpoints as positions into `entity_ids`.
    pub fn edge_positions(&self) -> Vec<(usize, usize)> {
        let pos = |v: usize| {
            self.entity_ids
                .iter()
                .position(|&e| e == v)
                .expect("edge endpoint selected")
        };
        self.edges.iter().map(|&(i, j)| (pos(i), pos(j))).collect()
    }

    pub fn is_materialized(&self) -> bool {
        !self.vertex_embeddings.is_empty()
    }
}

/// Chooses up to `k` entities for a passage and the edges among them.
///
/// Passages with more than `k` entities keep the `k` most frequent. Passages
/// with fewer are topped up breadth-first over the union graph, expanding
/// neighbours most-frequent first.
pub fn extract_local_ekg(global: &GlobalEKG, passage: &Passage, k: usize) -> LocalEKG {
    let mut seeds: Vec<usize> = passage.entity_ids.iter().copied().collect();
    global.rank(&mut seeds);
    let k = k.max(1);

    let selected = if seeds.len() >= k {
        seeds.truncate(k);
        seeds
    } else {
        let adj = global.union_adjacency();
        let mut chosen = seeds.clone();
        let mut seen: BTreeSet<usize> = seeds.iter().copied().collect();
        let mut queue: VecDeque<usize> = seeds.into_iter().collect();
        'bfs: while let Some(v) = queue.pop_front() {
            let mut next: Vec<usize> = adj
                .get(&v)
                .map(|n| n.iter().copied().filter(|u| !seen.contains(u)).collect())
                .unwrap_or_default();
            global.rank(&mut next);
            for u in next {
                seen.insert(u);
                chosen.push(u);
                queue.push_back(u);
                if chosen.len() == k {
                    break 'bfs;
                }
            }
        }
        chosen
    };

    let mut edges = Vec::new();
    for (a, &x) in selected.iter().enumerate() {
        for &y in &selected[a + 1..] {
            if global.cooccur_anywhere(x, y) {
                edges.push((x.min(y), x.max(y)));
            }
        }
    }
    let complete_fallback = edges.is_empty() && selected.len() > 1;
    if complete_fallback {
        for (a, &x) in selected.iter().enumerate() {
            for &y in &selected[a + 1..] {
                edges.push((x.min(y), x.max(y)));
            }
        }
    }
    edges.sort_unstable();

    LocalEKG {
        passage_id: passage.id.clone(),
        t: passage.chapter_index,
        entity_ids: selected,
        edges,
        complete_fallback,
        vertex_embeddings: Vec::new(),
        edge_embeddings: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Chapter;

    fn novel(paragraph_sizes: &[&[usize]]) -> Novel {
        Novel {
            id: "n".into(),
            title: "t".into(),
            chapters: paragraph_sizes
                .iter()
                .enumerate()
                .map(|(c, sizes)| {
                    let mut starts = Vec::new();
                    let mut n = 0;
                    for &s in *sizes {
                        starts.push(n);
                        n += s;
                    }
                    Chapter {
                        index: c + 1,
                        tokens: vec!["x".into(); n],
                        paragraph_starts: starts,
                        source_indices: vec![c + 1],
                    }
                })
                .collect(),
        }
    }

    fn m(chapter: usize, at: usize, e: usize) -> Mention {
        Mention {
            chapter_index: chapter,
            span: Span::new(at, at + 1),
            entity_id: e,
        }
    }

    #[test]
    fn same_paragraph_links_entities() {
        let n = novel(&[&[10, 10]]);
        let g = build_global_ekg(&n, &[m(1, 0, 0), m(1, 5, 1), m(1, 12, 2)], 3, 100);
        assert_eq!(g.graphs[0].vertices, vec![0, 1, 2]);
        let pairs: Vec<_> = g.graphs[0].edges.iter().map(|e| (e.i, e.j)).collect();
        assert_eq!(pairs, vec![(0, 1)]);
    }

    #[test]
    fn different_paragraphs_do_not_link() {
        let n = novel(&[&[10, 10]]);
        let g = build_global_ekg(&n, &[m(1, 0, 0), m(1, 12, 1)], 2, 100);
        assert!(g.graphs[0].edges.is_empty());
    }

    #[test]
    fn chapter_without_mentions_is_empty() {
        let n = novel(&[&[10], &[10]]);
        let g = build_global_ekg(&n, &[m(1, 0, 0)], 1, 100);
        assert!(g.graphs[1].vertices.is_empty() && g.graphs[1].edges.is_empty());
    }

    #[test]
    fn frequencies_count_mentions() {
        let n = novel(&[&[10]]);
        let g = build_global_ekg(&n, &[m(1, 0, 0), m(1, 2, 0), m(1, 3, 1)], 2, 100);
        assert_eq!(g.entity_frequency, vec![2, 1]);
    }

    fn passage(ids: &[usize]) -> Passage {
        Passage {
            id: "p0".into(),
            chapter_index: 1,
            span: Span::new(0, 1),
            text: vec!["x".into()],
            entity_ids: ids.iter().copied().collect(),
            comments: vec![],
        }
    }

    /// A chain 0-1-2-3-4-5-6 plus an isolated pair 7-8, in one chapter.
    fn chain() -> GlobalEKG {
        let n = novel(&[&[2, 2, 2, 2, 2, 2, 2]]);
        let mut ms = Vec::new();
        for p in 0..6 {
            ms.push(m(1, 2 * p, p));
            ms.push(m(1, 2 * p + 1, p + 1));
        }
        let mut g = build_global_ekg(&n, &ms, 9, 100);
        g.graphs[0].edges.push(Edge {
            i: 7,
            j: 8,
            evidence: vec![Span::new(0, 1)],
        });
        g
    }

    #[test]
    fn bfs_fills_to_k() {
        let local = extract_local_ekg(&chain(), &passage(&[2, 3]), 5);
        assert_eq!(local.num_vertices(), 5);
        assert!(local.entity_ids.starts_with(&[2, 3]) || local.entity_ids.starts_with(&[3, 2]));
    }

    #[test]
    fn excess_entities_keep_most_frequent() {
        let mut g = chain();
        g.entity_frequency = vec![1, 7, 3, 9, 2, 8, 5, 0, 0];
        let local = extract_local_ekg(&g, &passage(&[0, 1, 2, 3, 4, 5, 6]), 5);
        assert_eq!(local.entity_ids, vec![3, 5, 1, 6, 2]);
    }

    #[test]
    fn isolated_pair_exhausts_frontier() {
        let local = extract_local_ekg(&chain(), &passage(&[7, 8]), 5);
        assert_eq!(local.entity_ids.len(), 2);
        assert_eq!(local.edges, vec![(7, 8)]);
    }

    #[test]
    fn unrelated_selection_falls_back_to_complete_graph() {
        let local = extract_local_ekg(&chain(), &passage(&[0, 7]), 2);
        assert!(local.complete_fallback);
        assert_eq!(local.edges, vec![(0, 7)]);
    }

    #[test]
    fn topology_json_shape() {
        let v = chain().topology_json();
        assert_eq!(v["T"], 1);
        assert_eq!(v["edges"][0][0], json!([0, 1]));
    }
}
