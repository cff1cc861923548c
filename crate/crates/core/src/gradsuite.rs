//! Finite-difference gradient checks over every differentiable operation,
//! the building-block layers, and every training loss, in 64-bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::diffkit::attention::{scaled_dot_product_attention, TransformerDecoderLayer, TransformerEncoderLayer};
use crate::diffkit::lstm::BiLstm;
use crate::diffkit::nn::{Embedding, LayerNorm, Linear};
use crate::diffkit::{grad_check, DiffError, GradCheckConfig, GradCheckReport, Mask, ParamStore, Tape, Tensor, Var};
use crate::ekg::LocalEKG;
use crate::embed::{
    edge_loss, multitask_loss, triplet_hinge, vertex_loss, ChapterBatch, RelationNetwork, SmoothingWeights, Triplet,
    VertexTable,
};
use crate::graph2seq::{example_loss, G2sConfig, G2sExample, GatLayer, Graph2Seq, GraphStructure, Mode};

type DResult<T> = std::result::Result<T, DiffError>;

/// Relative tolerance for operations that are smooth everywhere.
pub const SMOOTH_TOLERANCE: f64 = 1e-6;
/// Relative tolerance for piecewise operations, composite layers and losses.
pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    SmoothOp,
    Op,
    Layer,
    Loss,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCase {
    pub name: String,
    pub kind: CaseKind,
    pub report: GradCheckReport,
}

impl GradCase {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }
}

fn uniform(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(lo..hi))
}

/// Contracts an arbitrary output with fixed random weights so every output
/// coordinate contributes to the checked scalar.
fn probe<'g>(tape: &'g Tape<'g, f64>, out: Var<'g, f64>) -> DResult<Var<'g, f64>> {
    let shape = out.value().shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let weights = uniform(&mut rng, &shape, -1.0, 1.0);
    Ok(out.mul(tape.constant(weights))?.sum())
}

struct Suite {
    rng: ChaCha8Rng,
    cases: Vec<GradCase>,
}

impl Suite {
    fn run<Func>(&mut self, name: &str, kind: CaseKind, store: &ParamStore<f64>, f: Func) -> DResult<()>
    where
        Func: for<'g> Fn(&'g Tape<'g, f64>) -> DResult<Var<'g, f64>>,
    {
        let tolerance = if kind == CaseKind::SmoothOp {
            SMOOTH_TOLERANCE
        } else {
            TOLERANCE
        };
        let config = GradCheckConfig {
            tolerance,
            ..GradCheckConfig::default()
        };
        let report = grad_check(store, f, config)?;
        self.cases.push(GradCase {
            name: name.to_string(),
            kind,
            report,
        });
        Ok(())
    }

    fn input(&mut self, store: &mut ParamStore<f64>, name: &str, shape: &[usize]) -> crate::diffkit::ParamId {
        store.add(name, uniform(&mut self.rng, shape, -1.0, 1.0))
    }

    /// Elementwise operations of one input.
    fn unary(&mut self) -> DResult<()> {
        type Unary = for<'g> fn(Var<'g, f64>) -> DResult<Var<'g, f64>>;
        let cases: [(&str, Unary, (f64, f64)); 12] = [
            ("transpose", |x| Ok(x.transpose()), (-1.0, 1.0)),
            ("reshape", |x| x.reshape(vec![2, 6]), (-1.0, 1.0)),
            ("scale", |x| Ok(x.scale(-1.7)), (-1.0, 1.0)),
            ("add_scalar", |x| x.add_scalar(0.3).mul(x), (-1.0, 1.0)),
            ("neg", |x| Ok(x.neg()), (-1.0, 1.0)),
            ("tanh", |x| Ok(x.tanh()), (-2.0, 2.0)),
            ("sigmoid", |x| Ok(x.sigmoid()), (-2.0, 2.0)),
            ("exp", |x| Ok(x.exp()), (-1.0, 1.0)),
            ("log", |x| Ok(x.log()), (0.5, 2.0)),
            ("softmax_rows", |x| x.softmax(1), (-2.0, 2.0)),
            ("softmax_cols", |x| x.softmax(0), (-2.0, 2.0)),
            ("log_softmax", |x| Ok(x.log_softmax()), (-2.0, 2.0)),
        ];
        for (name, op, (lo, hi)) in cases {
            let mut store = ParamStore::new();
            let x = store.add("x", uniform(&mut self.rng, &[3, 4], lo, hi));
            self.run(name, CaseKind::SmoothOp, &store, move |tape| {
                probe(tape, op(tape.param(x))?)
            })?;
        }

        // Piecewise-linear activations, evaluated away from the kink.
        let away = Tensor::from_fn(vec![3, 4], |k| {
            let v = 0.2 + 0.1 * k as f64;
            if k % 2 == 0 {
                v
            } else {
                -v
            }
        });
        for (name, slope) in [("relu", 0.0), ("leaky_relu", 0.2)] {
            let mut store = ParamStore::new();
            let x = store.add("x", away.clone());
            self.run(name, CaseKind::Op, &store, move |tape| {
                probe(tape, tape.param(x).leaky_relu(slope))
            })?;
        }
        Ok(())
    }

    fn binary(&mut self) -> DResult<()> {
        let mut store = ParamStore::new();
        let a = self.input(&mut store, "a", &[3, 4]);
        let b = self.input(&mut store, "b", &[4, 2]);
        let c = self.input(&mut store, "c", &[2, 4]);
        let d = self.input(&mut store, "d", &[3, 4]);
        let row = self.input(&mut store, "row", &[1, 4]);
        let col = self.input(&mut store, "col", &[3, 1]);
        self.run("matmul", CaseKind::SmoothOp, &store, |t| {
            probe(t, t.param(a).matmul(t.param(b))?)
        })?;
        self.run("matmul_t", CaseKind::SmoothOp, &store, |t| {
            probe(t, t.param(a).matmul_t(t.param(c))?)
        })?;
        self.run("add", CaseKind::SmoothOp, &store, |t| {
            probe(t, t.param(a).add(t.param(d))?)
        })?;
        self.run("sub", CaseKind::SmoothOp, &store, |t| {
            probe(t, t.param(a).sub(t.param(d))?)
        })?;
        self.run("mul", CaseKind::SmoothOp, &store, |t| {
            probe(t, t.param(a).mul(t.param(d))?)
        })?;
        self.run("add_row", CaseKind::SmoothOp, &store, |t| {
            probe(t, t.param(a).add_row(t.param(row))?)
        })?;
        self.run("outer_sum", CaseKind::SmoothOp, &store, |t| {
            probe(t, t.param(col).outer_sum(t.param(row))?)
        })?;
        self.run("concat_rows", CaseKind::SmoothOp, &store, |t| {
            probe(t, Var::concat_rows(&[t.param(a), t.param(c), t.param(row)])?)
        })?;
        self.run("concat_cols", CaseKind::SmoothOp, &store, |t| {
            probe(t, Var::concat_cols(&[t.param(a), t.param(col), t.param(d)])?)
        })?;
        self.run("slice_rows", CaseKind::SmoothOp, &store, |t| {
            probe(t, t.param(a).slice_rows(1, 3)?)
        })?;
        self.run("slice_cols", CaseKind::SmoothOp, &store, |t| {
            probe(t, t.param(a).slice_cols(1, 3)?)
        })?;
        self.run("gather_rows", CaseKind::SmoothOp, &store, |t| {
            probe(t, t.param(a).gather_rows(&[2, 0, 2, 1])?)
        })?;
        self.run("embedding_lookup", CaseKind::SmoothOp, &store, |t| {
            probe(t, Var::embedding_lookup(t.param(a), &[1, 1, 0])?)
        })?;
        self.run("sum", CaseKind::SmoothOp, &store, |t| {
            Ok(t.param(a).mul(t.param(d))?.sum())
        })?;
        self.run("mean", CaseKind::SmoothOp, &store, |t| {
            Ok(t.param(a).mul(t.param(d))?.mean())
        })?;
        self.run("l2_distance", CaseKind::SmoothOp, &store, |t| {
            probe(t, t.param(a).l2_distance(t.param(d))?)
        })?;
        self.run("cross_entropy_ls", CaseKind::SmoothOp, &store, |t| {
            t.param(a).cross_entropy_ls(&[0, 3, 1], 0.1)
        })?;

        let mask = Mask::from_fn(3, 4, |i, j| (i + j) % 3 != 1);
        self.run("softmax_masked", CaseKind::SmoothOp, &store, |t| {
            probe(t, t.param(a).scale(2.0).softmax_masked(Some(&mask))?)
        })?;

        let gamma = store.add("gamma", uniform(&mut self.rng, &[4], 0.5, 1.5));
        let beta = self.input(&mut store, "beta", &[4]);
        self.run("layer_norm", CaseKind::SmoothOp, &store, |t| {
            probe(t, t.param(a).layer_norm(t.param(gamma), t.param(beta), 1e-5)?)
        })?;
        Ok(())
    }

    fn layers(&mut self) -> DResult<()> {
        let mut store = ParamStore::new();
        let x = self.input(&mut store, "x", &[3, 4]);
        let lin = Linear::new(&mut store, "linear", 4, 5, true, &mut self.rng);
        self.run("linear", CaseKind::SmoothOp, &store, |t| {
            probe(t, lin.forward(t.param(x))?)
        })?;

        let mut store = ParamStore::new();
        let x = self.input(&mut store, "x", &[3, 4]);
        let ln = LayerNorm::new(&mut store, "ln", 4);
        self.run("layer_norm_module", CaseKind::SmoothOp, &store, |t| {
            probe(t, ln.forward(t.param(x))?)
        })?;

        let mut store = ParamStore::new();
        let emb = Embedding::new(&mut store, "emb", 5, 3, &mut self.rng);
        self.run("embedding", CaseKind::SmoothOp, &store, |t| {
            probe(t, emb.forward(t, &[4, 0, 4])?)
        })?;

        let mut store = ParamStore::new();
        let q = self.input(&mut store, "q", &[3, 4]);
        let k = self.input(&mut store, "k", &[5, 4]);
        let v = self.input(&mut store, "v", &[5, 2]);
        let mask = Mask::from_fn(3, 5, |i, j| j <= i + 2);
        self.run("attention", CaseKind::SmoothOp, &store, |t| {
            probe(
                t,
                scaled_dot_product_attention(t.param(q), t.param(k), t.param(v), Some(&mask))?.0,
            )
        })?;

        let mut store = ParamStore::new();
        let steps: Vec<_> = (0..3)
            .map(|s| self.input(&mut store, &format!("x{s}"), &[2, 3]))
            .collect();
        let lstm = BiLstm::new(&mut store, "lstm", 3, 2, 2, &mut self.rng);
        self.run("bilstm", CaseKind::Layer, &store, |t| {
            let inputs: Vec<_> = steps.iter().map(|&s| t.param(s)).collect();
            let outs = lstm.forward(&inputs)?;
            probe(t, Var::concat_rows(&outs)?)
        })?;

        let mut store = ParamStore::new();
        let x = self.input(&mut store, "x", &[3, 4]);
        let mem = self.input(&mut store, "memory", &[4, 4]);
        let enc = TransformerEncoderLayer::new(&mut store, "enc", 4, 2, 6, &mut self.rng)?;
        let dec = TransformerDecoderLayer::new(&mut store, "dec", 4, 2, 6, &mut self.rng)?;
        let keys = Mask::keys(3, &[true, true, false]);
        self.run("transformer_encoder", CaseKind::Layer, &store, |t| {
            probe(t, enc.forward(t.param(x), Some(&keys))?)
        })?;
        self.run("transformer_decoder", CaseKind::Layer, &store, |t| {
            probe(t, dec.forward(t.param(x), t.param(mem), None)?)
        })?;

        for (name, mode, shared) in [("gat_v", Mode::GatV, true), ("gat_ve", Mode::GatVE, false)] {
            let mut store = ParamStore::new();
            let verts = self.input(&mut store, "vertices", &[4, 3]);
            let edges = self.input(&mut store, "edges", &[3, 3]);
            let gat = GatLayer::new(&mut store, "gat", 3, shared, &mut self.rng);
            let graph = GraphStructure::new(4, vec![(0, 1), (1, 2), (0, 3)]);
            self.run(name, CaseKind::Layer, &store, |t| {
                probe(t, gat.forward(t, t.param(verts), Some(t.param(edges)), &graph, mode)?.0)
            })?;
        }
        Ok(())
    }

    fn losses(&mut self) -> DResult<()> {
        let (steps, n_e, d) = (3, 5, 4);
        let mut store = ParamStore::new();
        let table = VertexTable::new(&mut store, steps, n_e, d, &mut self.rng);
        let rn = RelationNetwork::new(&mut store, d, &mut self.rng);
        let feats: Vec<Tensor<f64>> = (0..steps).map(|_| uniform(&mut self.rng, &[2, d], -1.0, 1.0)).collect();
        let targets: Vec<Vec<usize>> = (0..steps).map(|t| vec![t % n_e, (t + 2) % n_e]).collect();
        self.run("vertex_loss", CaseKind::Loss, &store, |t| {
            vertex_fixture(t, &table, &feats, &targets, SmoothingWeights::UNSMOOTHED, 0.0)
        })?;
        self.run("smoothed_vertex_loss", CaseKind::Loss, &store, |t| {
            vertex_fixture(t, &table, &feats, &targets, SmoothingWeights::default(), 0.1)
        })?;

        let dp = store.add("d_pos", Tensor::from_fn(vec![3, 1], |k| 0.5 + 0.1 * k as f64));
        let dn = store.add("d_neg", Tensor::from_fn(vec![3, 1], |k| 0.2 - 0.05 * k as f64));
        self.run("triplet_hinge", CaseKind::Loss, &store, |t| {
            triplet_hinge(t.param(dp), t.param(dn), 0.1)
        })?;

        let sentences = uniform(&mut self.rng, &[3, d], -1.0, 1.0);
        let triplets = [
            Triplet { t: 1, i: 0, j: 1, k: 2 },
            Triplet { t: 2, i: 3, j: 4, k: 0 },
            Triplet { t: 3, i: 1, j: 2, k: 4 },
        ];
        // A wide margin keeps every hinge active.
        self.run("edge_loss", CaseKind::Loss, &store, |t| {
            edge_loss(t, &table, &rn, t.constant(sentences.clone()), &triplets, 10.0)
        })?;
        self.run("multitask_loss", CaseKind::Loss, &store, |t| {
            let v = vertex_fixture(t, &table, &feats, &targets, SmoothingWeights::default(), 0.1)?;
            let e = edge_loss(t, &table, &rn, t.constant(sentences.clone()), &triplets, 10.0)?;
            multitask_loss(v, e, 0.7)
        })?;

        for mode in Mode::ALL {
            let config = G2sConfig {
                mode,
                d_model: 4,
                heads: 1,
                ff_dim: 6,
                encoder_layers: 1,
                decoder_layers: 1,
                lstm_hidden: 2,
                lstm_layers: 1,
                gat_layers: 1,
                max_len: 8,
                shared_gat_weight: false,
                ..G2sConfig::default()
            };
            let mut store = ParamStore::new();
            let vocab = 12;
            let model = Graph2Seq::new(&mut store, &config, vocab, 3, &mut self.rng)?;
            let example = G2sExample {
                passage_id: "fixture".into(),
                passage: (0..5).map(|_| self.rng.gen_range(6..vocab)).collect(),
                local: LocalEKG {
                    passage_id: "fixture".into(),
                    t: 2,
                    entity_ids: vec![0, 1, 2],
                    edges: vec![(0, 1), (1, 2)],
                    complete_fallback: false,
                    vertex_embeddings: (0..2)
                        .map(|_| Tensor::from_fn(vec![3, 3], |_| self.rng.gen_range(-1.0f32..1.0)))
                        .collect(),
                    edge_embeddings: (0..2)
                        .map(|_| Tensor::from_fn(vec![2, 3], |_| self.rng.gen_range(-1.0f32..1.0)))
                        .collect(),
                },
                comments: (0..2)
                    .map(|_| (0..3).map(|_| self.rng.gen_range(6..vocab)).collect())
                    .collect(),
            };
            self.run(
                &format!("generator_nll_{}", mode.name().to_lowercase()),
                CaseKind::Loss,
                &store,
                |t| {
                    let (loss, tokens, _) = example_loss(&model, t, &example, 0.1)?;
                    Ok(loss.scale(1.0 / tokens as f64))
                },
            )?;
        }
        Ok(())
    }
}

fn vertex_fixture<'g>(
    tape: &'g Tape<'g, f64>,
    table: &VertexTable,
    feats: &[Tensor<f64>],
    targets: &[Vec<usize>],
    weights: SmoothingWeights,
    eps: f64,
) -> DResult<Var<'g, f64>> {
    let batches: Vec<ChapterBatch<'g, f64>> = feats
        .iter()
        .zip(targets)
        .enumerate()
        .map(|(i, (f, tg))| ChapterBatch {
            t: i + 1,
            features: tape.constant(f.clone()),
            targets: tg.clone(),
        })
        .collect();
    vertex_loss(tape, table, &batches, weights, eps)
}

/// Runs every check with a fixed seed and returns one entry per case.
pub fn run_grad_suite(seed: u64) -> DResult<Vec<GradCase>> {
    let mut suite = Suite {
        rng: ChaCha8Rng::seed_from_u64(seed),
        cases: Vec::new(),
    };
    suite.unary()?;
    suite.binary()?;
    suite.layers()?;
    suite.losses()?;
    Ok(suite.cases)
}
