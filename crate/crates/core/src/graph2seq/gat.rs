use rand::Rng;

use crate::diffkit::{xavier_uniform, DiffError, Float, Mask, ParamId, ParamStore, Tape, Var};

use super::Mode;

type Result<T> = std::result::Result<T, DiffError>;

const SLOPE: f64 = 0.2;

/// Local graph structure seen by a GAT layer: vertex adjacency (self-loops
/// included when requested) and the endpoints of each edge feature.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphStructure {
    pub vertices: usize,
    /// Edge endpoints as vertex positions.
    pub edges: Vec<(usize, usize)>,
    pub self_loops: bool,
}

impl GraphStructure {
    pub fn new(vertices: usize, edges: Vec<(usize, usize)>) -> Self {
        Self {
            vertices,
            edges,
            self_loops: true,
        }
    }

    fn adjacent(&self, i: usize, j: usize) -> bool {
        (self.self_loops && i == j)
            || self
                .edges
                .iter()
                .any(|&(a, b)| (a == i && b == j) || (a == j && b == i))
    }

    fn incident(&self, i: usize, k: usize) -> bool {
        let (a, b) = self.edges[k];
        a == i || b == i
    }

    /// Which of the `c_e + c_r` coefficients of each vertex are admissible.
    pub fn mask(&self, mode: Mode) -> Result<Mask> {
        let (c, m) = (self.vertices, self.edges.len());
        let mask = Mask::from_fn(c, c + m, |i, j| {
            if j < c {
                self.adjacent(i, j)
            } else {
                mode == Mode::GatVE && self.incident(i, j - c)
            }
        });
        if let Some(i) = (0..c).find(|&i| (0..c + m).all(|j| !mask.allowed(i, j))) {
            return Err(DiffError::Contract(format!(
                "vertex {i} has no neighbours and no self-loop"
            )));
        }
        Ok(mask)
    }
}

/// One edge-aware graph attention layer with a single head.
///
/// For vertex `i` the coefficients over neighbour vertices `j` are
/// `lrelu(g_src·Wv_i + g_dst·Wv_j)` and over incident edges `k` are
/// `lrelu(h_src·Wv_i + h_dst·Wr_k)`; both sets share one softmax, and the
/// output is the weighted sum of the projected vertices and edges.
#[derive(Clone, Debug)]
pub struct GatLayer {
    pub weight: ParamId,
    /// Separate edge projection; `None` shares `weight`.
    pub edge_weight: Option<ParamId>,
    pub g_src: ParamId,
    pub g_dst: ParamId,
    pub h_src: ParamId,
    pub h_dst: ParamId,
    pub dim: usize,
}

impl GatLayer {
    pub fn new<F: Float>(
        store: &mut ParamStore<F>,
        name: &str,
        dim: usize,
        shared_weight: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = store.add(format!("{name}.weight"), xavier_uniform(rng, dim, dim));
        let edge_weight =
            (!shared_weight).then(|| store.add(format!("{name}.edge_weight"), xavier_uniform(rng, dim, dim)));
        let mut vec = |suffix: &str| store.add(format!("{name}.{suffix}"), xavier_uniform(rng, dim, 1));
        Self {
            weight,
            edge_weight,
            g_src: vec("g_src"),
            g_dst: vec("g_dst"),
            h_src: vec("h_src"),
            h_dst: vec("h_dst"),
            dim,
        }
    }

    /// Returns the new vertex features `[c_e, dim]` and the attention matrix
    /// `[c_e, c_e + c_r]` whose rows each sum to one.
    pub fn forward<'g, F: Float>(
        &self,
        tape: &'g Tape<'g, F>,
        vertices: Var<'g, F>,
        edges: Option<Var<'g, F>>,
        graph: &GraphStructure,
        mode: Mode,
    ) -> Result<(Var<'g, F>, Var<'g, F>)> {
        let c = vertices.value().rows();
        if c != graph.vertices {
            return Err(DiffError::Contract(format!(
                "{c} vertex features for a graph of {} vertices",
                graph.vertices
            )));
        }
        let m = edges.map_or(0, |e| e.value().rows());
        if m != graph.edges.len() {
            return Err(DiffError::Contract(format!(
                "{m} edge features for {} edges",
                graph.edges.len()
            )));
        }
        let wv = vertices.matmul(tape.param(self.weight))?;
        let vertex_logits = wv
            .matmul(tape.param(self.g_src))?
            .outer_sum(wv.matmul(tape.param(self.g_dst))?.transpose())?;

        let (logits, values) = match edges.filter(|_| m > 0) {
            Some(e) => {
                let wr = e.matmul(tape.param(self.edge_weight.unwrap_or(self.weight)))?;
                let edge_logits = wv
                    .matmul(tape.param(self.h_src))?
                    .outer_sum(wr.matmul(tape.param(self.h_dst))?.transpose())?;
                (
                    Var::concat_cols(&[vertex_logits, edge_logits])?,
                    Var::concat_rows(&[wv, wr])?,
                )
            }
            None => (vertex_logits, wv),
        };
        let attn = logits
            .leaky_relu(F::lit(SLOPE))
            .softmax_masked(Some(&graph.mask(mode)?))?;
        Ok((attn.matmul(values)?, attn))
    }
}
