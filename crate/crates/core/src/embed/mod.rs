//! EKG embeddings: per-chapter vertex tables trained by masked-entity
//! prediction, and a relation network trained by triplet reconstruction.

mod artifact;
mod encoder;
mod examples;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffkit::nn::Linear;
use crate::diffkit::{normal, DiffError, Float, ParamId, ParamStore, Tape, Tensor, Var};
use crate::ekg::LocalEKG;

pub use artifact::{EkgEmbeddings, EMBEDDING_MAGIC};
pub use encoder::{AttentionEncoder, EncoderKind, HashedEncoder, SentenceEncoder};
pub use examples::{edge_examples, sample_negatives, vertex_examples, EdgeExample, VertexExample};
pub use train::{train_ekg, EkgTrainReport};

type DResult<T> = std::result::Result<T, DiffError>;

/// Weights of the previous, current and next chapter terms of the smoothed
/// vertex loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingWeights {
    pub past: f64,
    pub center: f64,
    pub future: f64,
}

impl SmoothingWeights {
    /// Only the current chapter contributes.
    pub const UNSMOOTHED: SmoothingWeights = SmoothingWeights {
        past: 0.0,
        center: 1.0,
        future: 0.0,
    };
}

impl Default for SmoothingWeights {
    fn default() -> Self {
        Self {
            past: 0.5,
            center: 1.0,
            future: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    /// Feature and embedding width `d_f`.
    pub dim: usize,
    pub encoder: EncoderKind,
    pub encoder_layers: usize,
    pub encoder_heads: usize,
    pub smoothing: SmoothingWeights,
    pub label_smoothing: f64,
    /// Triplet margin.
    pub margin: f64,
    /// Weight of the edge loss in the multi-task objective.
    pub lambda_r: f64,
    /// Full-batch optimizer steps of the vertex phase.
    pub vertex_steps: usize,
    /// Full-batch optimizer steps (epochs) of the edge phase.
    pub edge_steps: usize,
    pub warmup: u64,
    pub lr_scale: f64,
    /// Context tokens kept on each side of a masked mention.
    pub context_window: usize,
    /// Longest co-occurrence sentence fed to the encoder.
    pub max_sentence_tokens: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            encoder: EncoderKind::Hashed,
            encoder_layers: 2,
            encoder_heads: 4,
            smoothing: SmoothingWeights::default(),
            label_smoothing: 0.1,
            margin: 0.0,
            lambda_r: 1.0,
            vertex_steps: 200,
            edge_steps: 200,
            warmup: 5000,
            lr_scale: 1.0,
            context_window: 16,
            max_sentence_tokens: 64,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<(), String> {
        let s = &self.smoothing;
        if !(s.past >= 0.0 && s.future >= 0.0 && s.center > 0.0) {
            return Err("smoothing weights must be non-negative with a positive center weight".into());
        }
        if self.dim == 0 {
            return Err("embedding dim must be positive".into());
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err("label_smoothing must lie in [0, 1)".into());
        }
        if self.margin < 0.0 || self.lambda_r < 0.0 {
            return Err("margin and lambda_r must be non-negative".into());
        }
        if self.warmup == 0 {
            return Err("warmup must be at least 1".into());
        }
        if self.encoder == EncoderKind::Attention
            && (self.encoder_heads == 0 || !self.dim.is_multiple_of(self.encoder_heads))
        {
            return Err(format!(
                "dim {} not divisible by {} encoder heads",
                self.dim, self.encoder_heads
            ));
        }
        if self.context_window == 0 || self.max_sentence_tokens == 0 {
            return Err("context_window and max_sentence_tokens must be positive".into());
        }
        Ok(())
    }
}

/// One `[n_e, d]` parameter per chapter.
#[derive(Clone, Debug)]
pub struct VertexTable {
    pub chapters: Vec<ParamId>,
    pub num_entities: usize,
    pub dim: usize,
}

impl VertexTable {
    pub const PREFIX: &'static str = "vertex.table";

    pub fn new<F: Float>(
        store: &mut ParamStore<F>,
        steps: usize,
        num_entities: usize,
        dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let chapters = (1..=steps)
            .map(|t| {
                store.add(
                    format!("{}.{t}", Self::PREFIX),
                    normal(rng, vec![num_entities, dim], 0.1),
                )
            })
            .collect();
        Self {
            chapters,
            num_entities,
            dim,
        }
    }

    pub fn steps(&self) -> usize {
        self.chapters.len()
    }

    /// Parameter of 1-based chapter `t`.
    pub fn at(&self, t: usize) -> DResult<ParamId> {
        t.checked_sub(1)
            .and_then(|k| self.chapters.get(k))
            .copied()
            .ok_or_else(|| DiffError::Contract(format!("chapter {t} outside 1..={}", self.steps())))
    }

    /// `softmax(W[t] f)` over all entities.
    pub fn vertex_probability<F: Float>(&self, store: &ParamStore<F>, t: usize, feature: &[F]) -> DResult<Vec<F>> {
        if feature.len() != self.dim {
            return Err(DiffError::Shape {
                op: "vertex_probability",
                lhs: vec![self.num_entities, self.dim],
                rhs: vec![feature.len()],
            });
        }
        let w = store.get(self.at(t)?);
        let logits: Vec<F> = (0..self.num_entities)
            .map(|v| w.row(v).iter().zip(feature).map(|(&a, &b)| a * b).sum())
            .collect();
        let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
        let exps: Vec<F> = logits.iter().map(|&l| (l - max).exp()).collect();
        let z: F = exps.iter().copied().sum();
        Ok(exps.into_iter().map(|e| e / z).collect())
    }
}

/// Two-stage map: a vertex pair to an edge embedding, and a
/// (vertex, edge, vertex) triple to a reconstructed sentence feature.
#[derive(Clone, Debug)]
pub struct RelationNetwork {
    pub layer1: Linear,
    pub layer2: Linear,
    pub slope: f64,
}

impl RelationNetwork {
    pub const PREFIX: &'static str = "rn";

    pub fn new<F: Float>(store: &mut ParamStore<F>, dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            layer1: Linear::new(store, "rn.layer1", 2 * dim, dim, true, rng),
            layer2: Linear::new(store, "rn.layer2", 3 * dim, dim, true, rng),
            slope: 0.2,
        }
    }

    /// `r = lrelu(L1 [v_i; v_j])`, row-wise over `[m, d]` inputs.
    pub fn edge_embedding<'g, F: Float>(&self, vi: Var<'g, F>, vj: Var<'g, F>) -> DResult<Var<'g, F>> {
        Ok(self
            .layer1
            .forward(Var::concat_cols(&[vi, vj])?)?
            .leaky_relu(F::lit(self.slope)))
    }

    /// `f_p = lrelu(L2 [v_i; r; v_j])`.
    pub fn reconstruct<'g, F: Float>(&self, vi: Var<'g, F>, r: Var<'g, F>, vj: Var<'g, F>) -> DResult<Var<'g, F>> {
        Ok(self
            .layer2
            .forward(Var::concat_cols(&[vi, r, vj])?)?
            .leaky_relu(F::lit(self.slope)))
    }

    pub fn pair_feature<'g, F: Float>(&self, vi: Var<'g, F>, vj: Var<'g, F>) -> DResult<Var<'g, F>> {
        let r = self.edge_embedding(vi, vj)?;
        self.reconstruct(vi, r, vj)
    }
}

/// Masked-mention features of one chapter with their target entities.
#[derive(Clone, Debug)]
pub struct ChapterBatch<'g, F: Float> {
    /// 1-based chapter.
    pub t: usize,
    /// `[N, d]` features.
    pub features: Var<'g, F>,
    pub targets: Vec<usize>,
}

/// Temporally smoothed masked-entity loss summed over all examples:
/// `-(λ0 log p^{t-1} + λ1 log p^t + λ2 log p^{t+1})`, each term label-smoothed
/// by `eps`. Terms for chapters outside `1..=T` are dropped.
pub fn vertex_loss<'g, F: Float>(
    tape: &'g Tape<'g, F>,
    table: &VertexTable,
    batches: &[ChapterBatch<'g, F>],
    weights: SmoothingWeights,
    eps: f64,
) -> DResult<Var<'g, F>> {
    let mut total = tape.constant(Tensor::scalar(F::zero()));
    for b in batches {
        if b.targets.is_empty() {
            continue;
        }
        let terms = [
            (b.t.checked_sub(1), weights.past),
            (Some(b.t), weights.center),
            (Some(b.t + 1), weights.future),
        ];
        for (s, w) in terms {
            let Some(s) = s.filter(|&s| s >= 1 && s <= table.steps()) else {
                continue;
            };
            if w == 0.0 {
                continue;
            }
            let logits = b.features.matmul_t(tape.param(table.at(s)?))?;
            let ce = logits.cross_entropy_ls(&b.targets, F::lit(eps))?;
            total = total.add(ce.scale(F::lit(w)))?;
        }
    }
    Ok(total)
}

/// `sum(max(d⁺ - d⁻ + α, 0))` over `[m, 1]` distance columns.
pub fn triplet_hinge<'g, F: Float>(d_pos: Var<'g, F>, d_neg: Var<'g, F>, margin: f64) -> DResult<Var<'g, F>> {
    Ok(d_pos.sub(d_neg)?.add_scalar(F::lit(margin)).relu().sum())
}

/// One positive pair `(i, j)` and a negative `(i, k)` at chapter `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Triplet {
    pub t: usize,
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

/// Vertex rows for `(t, v)` pairs, gathered from the stacked chapter tables.
pub fn gather_vertices<'g, F: Float>(
    tape: &'g Tape<'g, F>,
    table: &VertexTable,
    picks: &[(usize, usize)],
) -> DResult<Var<'g, F>> {
    let tables: Vec<Var<'g, F>> = table.chapters.iter().map(|&id| tape.param(id)).collect();
    let stacked = Var::concat_rows(&tables)?;
    let mut idx = Vec::with_capacity(picks.len());
    for &(t, v) in picks {
        if t == 0 || t > table.steps() || v >= table.num_entities {
            return Err(DiffError::Contract(format!("vertex ({t}, {v}) outside the table")));
        }
        idx.push((t - 1) * table.num_entities + v);
    }
    stacked.gather_rows(&idx)
}

/// Triplet reconstruction loss summed over examples; `sentences` holds the
/// `[m, d]` features of each positive pair's co-occurrence sentence.
pub fn edge_loss<'g, F: Float>(
    tape: &'g Tape<'g, F>,
    table: &VertexTable,
    rn: &RelationNetwork,
    sentences: Var<'g, F>,
    triplets: &[Triplet],
    margin: f64,
) -> DResult<Var<'g, F>> {
    if triplets.is_empty() {
        return Ok(tape.constant(Tensor::scalar(F::zero())));
    }
    let vi = gather_vertices(tape, table, &triplets.iter().map(|x| (x.t, x.i)).collect::<Vec<_>>())?;
    let vj = gather_vertices(tape, table, &triplets.iter().map(|x| (x.t, x.j)).collect::<Vec<_>>())?;
    let vk = gather_vertices(tape, table, &triplets.iter().map(|x| (x.t, x.k)).collect::<Vec<_>>())?;
    let pos = rn.pair_feature(vi, vj)?;
    let neg = rn.pair_feature(vi, vk)?;
    triplet_hinge(pos.l2_distance(sentences)?, neg.l2_distance(sentences)?, margin)
}

/// `L_vertex + λ_r L_edge`.
pub fn multitask_loss<'g, F: Float>(vertex: Var<'g, F>, edge: Var<'g, F>, lambda_r: f64) -> DResult<Var<'g, F>> {
    vertex.add(edge.scale(F::lit(lambda_r)))
}

/// Fills the embedding sequences of a local graph: vertex rows of every
/// chapter table and relation-network edge embeddings at every chapter.
pub fn materialize_embeddings(
    store: &ParamStore<f32>,
    table: &VertexTable,
    rn: &RelationNetwork,
    local: &mut LocalEKG,
) -> DResult<()> {
    let tape = Tape::inference(store);
    let mut vertices = Vec::with_capacity(table.steps());
    let mut edges = Vec::with_capacity(table.steps());
    for t in 1..=table.steps() {
        let w = tape.param(table.at(t)?);
        vertices.push(w.gather_rows(&local.entity_ids)?.value().as_ref().clone());
        if local.edges.is_empty() {
            edges.push(Tensor::zeros(vec![0, table.dim]));
            continue;
        }
        let vi = w.gather_rows(&local.edges.iter().map(|e| e.0).collect::<Vec<_>>())?;
        let vj = w.gather_rows(&local.edges.iter().map(|e| e.1).collect::<Vec<_>>())?;
        edges.push(rn.edge_embedding(vi, vj)?.value().as_ref().clone());
    }
    local.vertex_embeddings = vertices;
    local.edge_embeddings = edges;
    Ok(())
}

/// Mean cosine similarity between `W[t][v]` and `W[t+1][v]` over all
/// entities and adjacent chapter pairs.
pub fn adjacent_chapter_similarity(store: &ParamStore<f32>, table: &VertexTable) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for w in table.chapters.windows(2) {
        let (a, b) = (store.get(w[0]), store.get(w[1]));
        for v in 0..table.num_entities {
            let (x, y) = (a.row(v), b.row(v));
            let dot: f64 = x.iter().zip(y).map(|(&p, &q)| f64::from(p) * f64::from(q)).sum();
            let nx = x.iter().map(|&p| f64::from(p).powi(2)).sum::<f64>().sqrt();
            let ny = y.iter().map(|&q| f64::from(q).powi(2)).sum::<f64>().sqrt();
            if nx > 0.0 && ny > 0.0 {
                total += dot / (nx * ny);
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}
