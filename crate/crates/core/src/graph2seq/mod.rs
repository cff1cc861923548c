//! Graph-to-sequence comment generator: temporal Bi-LSTM over the local EKG,
//! edge-aware graph attention, a self-attention passage encoder and a
//! Transformer decoder over the fused memory.

mod data;
mod decode;
mod gat;
mod model;
mod train;

use serde::{Deserialize, Serialize};

pub use data::{build_examples, G2sExample};
pub use decode::{beam_decode, greedy_decode, Hypothesis};
pub use gat::{GatLayer, GraphStructure};
pub use model::{Graph2Seq, GraphFeatures};
pub use train::{evaluate_teacher_forced, example_loss, train_g2s, G2sCheckpoint, G2sTrainReport, TeacherForced};

/// Which graph encoder feeds the decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Temporal vertex encodings go to the decoder directly.
    #[serde(rename = "EKG")]
    Ekg,
    /// Graph attention over vertices only.
    #[serde(rename = "GAT_V")]
    GatV,
    /// Graph attention over vertices and edges.
    #[serde(rename = "GAT_VE")]
    GatVE,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Ekg, Mode::GatV, Mode::GatVE];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Ekg => "EKG",
            Mode::GatV => "GAT_V",
            Mode::GatVE => "GAT_VE",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown mode {s:?}; expected EKG, GAT_V or GAT_VE"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct G2sConfig {
    pub mode: Mode,
    pub d_model: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    /// Hidden size of each direction of the temporal Bi-LSTM.
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub gat_layers: usize,
    /// Entities kept per local graph.
    pub k: usize,
    pub max_passage_len: usize,
    pub max_len: usize,
    pub beam: usize,
    pub length_penalty: f64,
    pub label_smoothing: f64,
    pub warmup: u64,
    pub lr_scale: f64,
    pub epochs: usize,
    /// Passages per optimizer step; 0 means the whole dataset.
    pub batch_passages: usize,
    pub shared_embeddings: bool,
    pub shared_gat_weight: bool,
}

impl Default for G2sConfig {
    fn default() -> Self {
        Self {
            mode: Mode::GatVE,
            d_model: 64,
            heads: 4,
            ff_dim: 128,
            encoder_layers: 2,
            decoder_layers: 2,
            lstm_hidden: 32,
            lstm_layers: 2,
            gat_layers: 2,
            k: 5,
            max_passage_len: 256,
            max_len: 50,
            beam: 4,
            length_penalty: 0.7,
            label_smoothing: 0.1,
            warmup: 5000,
            lr_scale: 1.0,
            epochs: 20,
            batch_passages: 8,
            shared_embeddings: true,
            shared_gat_weight: true,
        }
    }
}

impl G2sConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("d_model", self.d_model),
            ("heads", self.heads),
            ("ff_dim", self.ff_dim),
            ("lstm_hidden", self.lstm_hidden),
            ("lstm_layers", self.lstm_layers),
            ("k", self.k),
            ("max_passage_len", self.max_passage_len),
            ("max_len", self.max_len),
            ("beam", self.beam),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(format!("{name} must be positive"));
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.heads
            ));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err("label_smoothing must lie in [0, 1)".into());
        }
        if self.length_penalty < 0.0 {
            return Err("length_penalty must be non-negative".into());
        }
        if self.warmup == 0 {
            return Err("warmup must be at least 1".into());
        }
        if self.mode != Mode::Ekg && self.gat_layers == 0 {
            return Err(format!("mode {} needs at least one GAT layer", self.mode.name()));
        }
        Ok(())
    }
}
