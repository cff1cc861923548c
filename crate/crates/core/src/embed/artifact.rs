use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{AttentionEncoder, EmbedConfig, EncoderKind, HashedEncoder, RelationNetwork, SentenceEncoder, VertexTable};
use crate::corpus::Vocabulary;
use crate::diffkit::checkpoint::Checkpoint;
use crate::diffkit::ParamStore;
use crate::error::{io_err, Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 5] = b"EKGE1";

/// Trained vertex tables, relation network and sentence encoder.
#[derive(Clone, Debug)]
pub struct EkgEmbeddings {
    pub novel_id: String,
    pub store: ParamStore<f32>,
    pub table: VertexTable,
    pub rn: RelationNetwork,
    pub encoder: SentenceEncoder,
    pub config: EmbedConfig,
}

impl EkgEmbeddings {
    /// Freshly initialised parameters. `vocab` is required by the attention
    /// encoder and ignored otherwise.
    pub fn new(
        novel_id: &str,
        steps: usize,
        num_entities: usize,
        config: &EmbedConfig,
        vocab: Option<Vocabulary>,
        seed: u64,
    ) -> Result<Self> {
        config.validate().map_err(Error::Config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let table = VertexTable::new(&mut store, steps, num_entities, config.dim, &mut rng);
        let rn = RelationNetwork::new(&mut store, config.dim, &mut rng);
        let encoder = match config.encoder {
            EncoderKind::Hashed => SentenceEncoder::Hashed(HashedEncoder { dim: config.dim }),
            EncoderKind::Attention => {
                let vocab = vocab.ok_or_else(|| Error::Config("the attention encoder needs a vocabulary".into()))?;
                SentenceEncoder::Attention(AttentionEncoder::new(
                    &mut store,
                    vocab,
                    config.dim,
                    config.encoder_layers,
                    config.encoder_heads,
                    &mut rng,
                )?)
            }
        };
        Ok(Self {
            novel_id: novel_id.to_string(),
            store,
            table,
            rn,
            encoder,
            config: config.clone(),
        })
    }

    pub fn steps(&self) -> usize {
        self.table.steps()
    }

    pub fn num_entities(&self) -> usize {
        self.table.num_entities
    }

    pub fn dim(&self) -> usize {
        self.table.dim
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let vocab = match &self.encoder {
            SentenceEncoder::Attention(a) => Some(a.vocab.clone()),
            SentenceEncoder::Hashed(_) => None,
        };
        let mut ck = Checkpoint::new(json!({
            "novel_id": self.novel_id,
            "T": self.steps(),
            "n_e": self.num_entities(),
            "d_f": self.dim(),
            "entity_ids": (0..self.num_entities()).collect::<Vec<_>>(),
            "config": self.config,
            "vocab": vocab,
        }));
        for (_, p) in self.store.iter() {
            ck.push(p.name.clone(), &p.value);
        }
        ck
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_checkpoint().to_bytes(EMBEDDING_MAGIC)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
        self.to_checkpoint().write_to(EMBEDDING_MAGIC, &mut w)?;
        w.flush().map_err(io_err(path))
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let meta = &ck.meta;
        let field = |k: &str| {
            meta.get(k)
                .and_then(|v| v.as_u64())
                .map(|v| v as usize)
                .ok_or_else(|| Error::Contract(format!("embedding manifest lacks {k}")))
        };
        let (steps, n_e) = (field("T")?, field("n_e")?);
        let config: EmbedConfig = serde_json::from_value(meta["config"].clone())?;
        let vocab: Option<Vocabulary> = serde_json::from_value(meta["vocab"].clone())?;
        let novel_id = meta["novel_id"].as_str().unwrap_or_default().to_string();
        let mut emb = Self::new(&novel_id, steps, n_e, &config, vocab, 0)?;
        emb.store
            .load_named(ck.tensors.iter().map(|(n, t)| (n.as_str(), t.clone())))?;
        Ok(emb)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r = BufReader::new(File::open(path).map_err(io_err(path))?);
        Self::from_checkpoint(Checkpoint::read_from(EMBEDDING_MAGIC, r)?)
    }
}
