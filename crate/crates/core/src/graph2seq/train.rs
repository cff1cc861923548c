use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use super::{G2sConfig, G2sExample, Graph2Seq};
use crate::corpus::Vocabulary;
use crate::diffkit::checkpoint::{Checkpoint, MODEL_MAGIC};
use crate::diffkit::{noam_lr, AdamConfig, AdamState, DiffError, Float, ParamStore, Tape, Var};
use crate::error::{io_err, Error, Result};

/// Teacher-forced totals over a set of comments.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct TeacherForced {
    /// Summed label-smoothed cross-entropy.
    pub loss: f64,
    pub tokens: usize,
    pub correct: usize,
}

impl TeacherForced {
    pub fn accuracy(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            self.correct as f64 / self.tokens as f64
        }
    }

    pub fn mean_loss(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            self.loss / self.tokens as f64
        }
    }
}

/// Summed teacher-forced loss of every comment of one passage, with the
/// count of target tokens and of argmax hits.
pub fn example_loss<'g, F: Float>(
    model: &Graph2Seq,
    tape: &'g Tape<'g, F>,
    example: &G2sExample,
    eps: f64,
) -> std::result::Result<(Var<'g, F>, usize, usize), DiffError> {
    let memory = model.memory(tape, &example.passage, &example.local)?;
    let mut parts = Vec::with_capacity(example.comments.len());
    let (mut tokens, mut correct) = (0, 0);
    for comment in &example.comments {
        let mut prefix = Vec::with_capacity(comment.len() + 1);
        prefix.push(Vocabulary::BOS);
        prefix.extend_from_slice(comment);
        let mut targets = comment.clone();
        targets.push(Vocabulary::EOS);
        let logits = model.decode_logits(tape, memory, &prefix, None)?;
        {
            let v = logits.value();
            for (i, &t) in targets.iter().enumerate() {
                let row = v.row(i);
                let best = argmax(row);
                correct += usize::from(best == t);
            }
        }
        tokens += targets.len();
        parts.push(logits.cross_entropy_ls(&targets, F::lit(eps))?);
    }
    let mut total = tape.constant(crate::diffkit::Tensor::scalar(F::zero()));
    for p in parts {
        total = total.add(p)?;
    }
    Ok((total, tokens, correct))
}

/// Index of the largest entry; the lowest index wins ties.
pub(crate) fn argmax<F: Float>(row: &[F]) -> usize {
    let mut best = 0;
    for (j, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = j;
        }
    }
    best
}

/// Model parameters, optimizer moments and progress; everything needed to
/// resume training or to generate.
#[derive(Clone, Debug)]
pub struct G2sCheckpoint {
    pub model: Graph2Seq,
    pub store: ParamStore<f32>,
    pub adam: AdamState<f32>,
    pub vocab: Vocabulary,
    /// Completed epochs.
    pub epoch: usize,
    /// Per-step mean token loss so far.
    pub losses: Vec<f64>,
}

impl G2sCheckpoint {
    pub fn new(config: &G2sConfig, vocab: Vocabulary, feature_dim: usize, seed: u64) -> Result<Self> {
        config.validate().map_err(Error::Config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let model = Graph2Seq::new(&mut store, config, vocab.len(), feature_dim, &mut rng)?;
        let adam = AdamState::new(&store, AdamConfig::default());
        Ok(Self {
            model,
            store,
            adam,
            vocab,
            epoch: 0,
            losses: Vec::new(),
        })
    }

    pub fn config(&self) -> &G2sConfig {
        &self.model.config
    }

    /// Human-readable description written next to the checkpoint.
    pub fn sidecar(&self) -> Value {
        json!({
            "mode": self.model.mode().name(),
            "config": self.model.config,
            "vocab_size": self.vocab.len(),
            "vocab_hash": self.vocab.fingerprint(),
            "feature_dim": self.model.feature_dim,
            "parameters": self.store.num_scalars(),
            "epoch": self.epoch,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(json!({
            "config": self.model.config,
            "feature_dim": self.model.feature_dim,
            "vocab": self.vocab,
            "vocab_hash": self.vocab.fingerprint(),
            "epoch": self.epoch,
            "step": self.adam.step,
            "losses": self.losses,
        }));
        for (id, p) in self.store.iter() {
            ck.push(p.name.clone(), &p.value);
            ck.push(format!("adam.m.{}", p.name), &self.adam.first[id.index()]);
            ck.push(format!("adam.v.{}", p.name), &self.adam.second[id.index()]);
        }
        ck
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_checkpoint().to_bytes(MODEL_MAGIC)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
        self.to_checkpoint().write_to(MODEL_MAGIC, &mut w)?;
        w.flush().map_err(io_err(path))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta = &ck.meta;
        let config: G2sConfig = serde_json::from_value(meta["config"].clone())?;
        let vocab: Vocabulary = serde_json::from_value(meta["vocab"].clone())?;
        let feature_dim = meta["feature_dim"]
            .as_u64()
            .ok_or_else(|| Error::Contract("model manifest lacks feature_dim".into()))?
            as usize;
        let mut state = Self::new(&config, vocab, feature_dim, 0)?;
        state
            .store
            .load_named(ck.tensors.iter().map(|(n, t)| (n.as_str(), t.clone())))?;
        for (id, p) in state.store.iter() {
            let moment = |prefix: &str| {
                ck.get(&format!("{prefix}.{}", p.name))
                    .cloned()
                    .ok_or_else(|| Error::Contract(format!("checkpoint lacks {prefix}.{}", p.name)))
            };
            state.adam.first[id.index()] = moment("adam.m")?;
            state.adam.second[id.index()] = moment("adam.v")?;
        }
        state.adam.step = meta["step"].as_u64().unwrap_or(0);
        state.epoch = meta["epoch"].as_u64().unwrap_or(0) as usize;
        state.losses = serde_json::from_value(meta["losses"].clone())?;
        Ok(state)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r = BufReader::new(File::open(path).map_err(io_err(path))?);
        Self::from_checkpoint(&Checkpoint::read_from(MODEL_MAGIC, r)?)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct G2sTrainReport {
    /// Mean token loss of every optimizer step run by this call.
    pub step_losses: Vec<f64>,
    pub epochs_run: usize,
}

/// Teacher-forced training with label smoothing, Adam and the
/// inverse-square-root schedule, continuing from `state.epoch` up to the
/// configured number of epochs. `on_epoch` sees the state after every epoch.
pub fn train_g2s(
    state: &mut G2sCheckpoint,
    examples: &[G2sExample],
    seed: u64,
    mut on_epoch: impl FnMut(&G2sCheckpoint) -> Result<()>,
) -> Result<G2sTrainReport> {
    let config = state.config().clone();
    let mut report = G2sTrainReport::default();
    if examples.is_empty() {
        return Err(Error::Contract("no training passages".into()));
    }
    let batch = if config.batch_passages == 0 {
        examples.len()
    } else {
        config.batch_passages
    };
    while state.epoch < config.epochs {
        let epoch = state.epoch + 1;
        let mut order: Vec<usize> = (0..examples.len()).collect();
        if batch < examples.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(epoch as u64);
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let (mean, grads) = {
                let tape = Tape::new(&state.store);
                let mut total = tape.constant(crate::diffkit::Tensor::scalar(0f32));
                let mut tokens = 0;
                for &i in chunk {
                    let (l, n, _) = example_loss(&state.model, &tape, &examples[i], config.label_smoothing)?;
                    total = total.add(l)?;
                    tokens += n;
                }
                let loss = total.scale(1.0 / tokens.max(1) as f32);
                let mean = f64::from(loss.item());
                if !mean.is_finite() {
                    return Err(Error::Divergence(format!(
                        "generator loss became {mean} at step {}; lower lr_scale or raise warmup",
                        state.adam.step + 1
                    )));
                }
                (mean, tape.backward(loss)?.into_params())
            };
            let lr = noam_lr(state.adam.step + 1, config.warmup, config.d_model, config.lr_scale)?;
            state.adam.step(&mut state.store, &grads, lr)?;
            state.losses.push(mean);
            report.step_losses.push(mean);
            debug!("step {}: loss {mean:.4} lr {lr:.2e}", state.adam.step);
        }
        state.epoch = epoch;
        report.epochs_run += 1;
        info!(
            "epoch {epoch}/{}: last loss {:.4}",
            config.epochs,
            state.losses.last().copied().unwrap_or(f64::NAN)
        );
        on_epoch(state)?;
    }
    Ok(report)
}

/// Teacher-forced loss and token accuracy without updating anything.
pub fn evaluate_teacher_forced(state: &G2sCheckpoint, examples: &[G2sExample]) -> Result<TeacherForced> {
    let mut out = TeacherForced::default();
    for ex in examples {
        let tape = Tape::inference(&state.store);
        let (l, n, c) = example_loss(&state.model, &tape, ex, state.config().label_smoothing)?;
        out.loss += f64::from(l.item());
        out.tokens += n;
        out.correct += c;
    }
    Ok(out)
}
