use rand::Rng;

use super::gat::{GatLayer, GraphStructure};
use super::{G2sConfig, Mode};
use crate::diffkit::attention::{TransformerDecoderLayer, TransformerEncoderLayer};
use crate::diffkit::lstm::BiLstm;
use crate::diffkit::nn::{sinusoidal_positions, Embedding, LayerNorm, Linear};
use crate::diffkit::{normal, DiffError, Float, Mask, ParamStore, Tape, Var};
use crate::ekg::LocalEKG;

type Result<T> = std::result::Result<T, DiffError>;

/// Temporal encodings at the passage's chapter.
#[derive(Clone, Copy, Debug)]
pub struct GraphFeatures<'g, F: Float> {
    /// `[c_e, 2h]`.
    pub vertices: Var<'g, F>,
    /// `[c_r, 2h]`, absent when the local graph has no edges.
    pub edges: Option<Var<'g, F>>,
}

#[derive(Clone, Debug)]
pub struct Graph2Seq {
    pub config: G2sConfig,
    pub vocab_size: usize,
    /// Width of the EKG embeddings fed to the Bi-LSTM.
    pub feature_dim: usize,
    pub embedding: Embedding,
    pub decoder_embedding: Option<Embedding>,
    pub encoder: Vec<TransformerEncoderLayer>,
    pub encoder_norm: LayerNorm,
    pub temporal: BiLstm,
    pub gat: Vec<GatLayer>,
    pub graph_proj: Linear,
    pub decoder: Vec<TransformerDecoderLayer>,
    pub decoder_norm: LayerNorm,
    pub output: Linear,
}

impl Graph2Seq {
    pub fn new<F: Float>(
        store: &mut ParamStore<F>,
        config: &G2sConfig,
        vocab_size: usize,
        feature_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate().map_err(DiffError::Contract)?;
        let d = config.d_model;
        let embedding = Embedding::new(store, "g2s.embedding", vocab_size, d, rng);
        let decoder_embedding =
            (!config.shared_embeddings).then(|| Embedding::new(store, "g2s.dec_embedding", vocab_size, d, rng));
        let encoder = (0..config.encoder_layers)
            .map(|l| TransformerEncoderLayer::new(store, &format!("g2s.enc{l}"), d, config.heads, config.ff_dim, rng))
            .collect::<Result<Vec<_>>>()?;
        let encoder_norm = LayerNorm::new(store, "g2s.enc_ln", d);
        let temporal = BiLstm::new(
            store,
            "g2s.temporal",
            feature_dim,
            config.lstm_hidden,
            config.lstm_layers,
            rng,
        );
        let gdim = temporal.output_dim();
        let gat = (0..config.gat_layers)
            .map(|l| GatLayer::new(store, &format!("g2s.gat{l}"), gdim, config.shared_gat_weight, rng))
            .collect();
        let graph_proj = Linear::new(store, "g2s.graph_proj", gdim, d, true, rng);
        let decoder = (0..config.decoder_layers)
            .map(|l| TransformerDecoderLayer::new(store, &format!("g2s.dec{l}"), d, config.heads, config.ff_dim, rng))
            .collect::<Result<Vec<_>>>()?;
        let decoder_norm = LayerNorm::new(store, "g2s.dec_ln", d);
        let output = Linear::new(store, "g2s.output", d, vocab_size, true, rng);
        // Near-uniform predictions at initialisation.
        *store.get_mut(output.weight) = normal(rng, vec![d, vocab_size], 0.02);
        Ok(Self {
            config: config.clone(),
            vocab_size,
            feature_dim,
            embedding,
            decoder_embedding,
            encoder,
            encoder_norm,
            temporal,
            gat,
            graph_proj,
            decoder,
            decoder_norm,
            output,
        })
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    fn embed<'g, F: Float>(&self, tape: &'g Tape<'g, F>, ids: &[usize], decoder: bool) -> Result<Var<'g, F>> {
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.vocab_size) {
            return Err(DiffError::Contract(format!(
                "token id {bad} outside vocabulary of {}",
                self.vocab_size
            )));
        }
        let table = match (&self.decoder_embedding, decoder) {
            (Some(e), true) => e,
            _ => &self.embedding,
        };
        let d = self.config.d_model;
        table
            .forward(tape, ids)?
            .scale(F::lit((d as f64).sqrt()))
            .add(tape.constant(sinusoidal_positions(ids.len(), d)))
    }

    /// Self-attention encoding of a passage, one row per token. Positions
    /// whose `key_valid` flag is false are never attended to.
    pub fn encode_passage<'g, F: Float>(
        &self,
        tape: &'g Tape<'g, F>,
        ids: &[usize],
        key_valid: Option<&[bool]>,
    ) -> Result<Var<'g, F>> {
        if ids.is_empty() {
            return Err(DiffError::Contract("cannot encode an empty passage".into()));
        }
        if ids.len() > self.config.max_passage_len {
            return Err(DiffError::Contract(format!(
                "passage of {} tokens exceeds the limit of {}",
                ids.len(),
                self.config.max_passage_len
            )));
        }
        let mask = match key_valid {
            Some(v) if v.len() != ids.len() => {
                return Err(DiffError::Contract("padding flags do not match the passage".into()))
            }
            Some(v) => Some(Mask::keys(ids.len(), v)),
            None => None,
        };
        let mut x = self.embed(tape, ids, false)?;
        for layer in &self.encoder {
            x = layer.forward(x, mask.as_ref())?;
        }
        self.encoder_norm.forward(x)
    }

    /// Runs every vertex and edge sequence through the shared Bi-LSTM and
    /// keeps the output at the passage's chapter.
    pub fn temporal_encode<'g, F: Float>(
        &self,
        tape: &'g Tape<'g, F>,
        local: &LocalEKG,
    ) -> Result<GraphFeatures<'g, F>> {
        let steps = local.vertex_embeddings.len();
        if steps == 0 {
            return Err(DiffError::Contract(
                "local graph has no embedding sequence (T = 0)".into(),
            ));
        }
        if local.edge_embeddings.len() != steps {
            return Err(DiffError::Contract("vertex and edge sequences differ in length".into()));
        }
        if local.t == 0 || local.t > steps {
            return Err(DiffError::Contract(format!("chapter {} outside 1..={steps}", local.t)));
        }
        let (c, m) = (local.num_vertices(), local.num_edges());
        let inputs = (0..steps)
            .map(|s| {
                let v = tape.constant(local.vertex_embeddings[s].cast());
                if m == 0 {
                    Ok(v)
                } else {
                    Var::concat_rows(&[v, tape.constant(local.edge_embeddings[s].cast())])
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let out = self.temporal.forward(&inputs)?[local.t - 1];
        Ok(GraphFeatures {
            vertices: out.slice_rows(0, c)?,
            edges: if m == 0 { None } else { Some(out.slice_rows(c, c + m)?) },
        })
    }

    /// Graph slots for the decoder memory, `[c_e, d_model]`, plus the
    /// attention matrix of every GAT layer.
    pub fn graph_slots<'g, F: Float>(
        &self,
        tape: &'g Tape<'g, F>,
        features: GraphFeatures<'g, F>,
        structure: &GraphStructure,
    ) -> Result<(Var<'g, F>, Vec<Var<'g, F>>)> {
        let mut v = features.vertices;
        let mut attentions = Vec::new();
        if self.mode() != Mode::Ekg {
            for (l, layer) in self.gat.iter().enumerate() {
                let (out, attn) = layer.forward(tape, v, features.edges, structure, self.mode())?;
                attentions.push(attn);
                v = if l + 1 < self.gat.len() {
                    out.leaky_relu(F::lit(0.2))
                } else {
                    out
                };
            }
        }
        Ok((self.graph_proj.forward(v)?, attentions))
    }

    /// Decoder memory: graph slots followed by the passage encoding.
    pub fn memory<'g, F: Float>(
        &self,
        tape: &'g Tape<'g, F>,
        passage: &[usize],
        local: &LocalEKG,
    ) -> Result<Var<'g, F>> {
        let features = self.temporal_encode(tape, local)?;
        let structure = GraphStructure::new(local.num_vertices(), local.edge_positions());
        let (slots, _) = self.graph_slots(tape, features, &structure)?;
        let encoded = self.encode_passage(tape, passage, None)?;
        Var::concat_rows(&[slots, encoded])
    }

    /// Final decoder states, one row per prefix position.
    pub fn decode_hidden<'g, F: Float>(
        &self,
        tape: &'g Tape<'g, F>,
        memory: Var<'g, F>,
        prefix: &[usize],
        memory_valid: Option<&[bool]>,
    ) -> Result<Var<'g, F>> {
        if prefix.is_empty() {
            return Err(DiffError::Contract("decoder prefix must start with BOS".into()));
        }
        if prefix.len() > self.config.max_len + 1 {
            return Err(DiffError::Contract(format!(
                "prefix of {} tokens exceeds the decoding limit of {}",
                prefix.len(),
                self.config.max_len
            )));
        }
        let mask = memory_valid.map(|v| Mask::keys(prefix.len(), v));
        let mut x = self.embed(tape, prefix, true)?;
        for layer in &self.decoder {
            x = layer.forward(x, memory, mask.as_ref())?;
        }
        self.decoder_norm.forward(x)
    }

    /// Logits `[len(prefix), vocab]` of the next token after each prefix
    /// position.
    pub fn decode_logits<'g, F: Float>(
        &self,
        tape: &'g Tape<'g, F>,
        memory: Var<'g, F>,
        prefix: &[usize],
        memory_valid: Option<&[bool]>,
    ) -> Result<Var<'g, F>> {
        self.output
            .forward(self.decode_hidden(tape, memory, prefix, memory_valid)?)
    }

    /// Next-token distribution after `prefix`.
    pub fn fuse_and_decode_step<'g, F: Float>(
        &self,
        tape: &'g Tape<'g, F>,
        memory: Var<'g, F>,
        prefix: &[usize],
        memory_valid: Option<&[bool]>,
    ) -> Result<Vec<F>> {
        let hidden = self.decode_hidden(tape, memory, prefix, memory_valid)?;
        let n = prefix.len();
        let probs = self.output.forward(hidden.slice_rows(n - 1, n)?)?.softmax(1)?;
        let out = probs.value().data().to_vec();
        Ok(out)
    }
}
