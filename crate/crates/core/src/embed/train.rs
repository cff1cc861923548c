use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    edge_examples, edge_loss, sample_negatives, vertex_examples, vertex_loss, ChapterBatch, EkgEmbeddings, EmbedConfig,
    EncoderKind, RelationNetwork, VertexExample, VertexTable,
};
use crate::corpus::{build_vocab, Corpus};
use crate::diffkit::{noam_lr, AdamConfig, AdamState, Tape, Tensor};
use crate::ekg::GlobalEKG;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EkgTrainReport {
    pub vertex_examples: usize,
    pub edge_examples: usize,
    /// Vertex-loss value before each phase-1 update.
    pub vertex_losses: Vec<f64>,
    /// Unweighted edge-loss value before each phase-2 update.
    pub edge_losses: Vec<f64>,
    /// Edge examples without a valid negative, summed over epochs.
    pub skipped_negatives: usize,
}

fn check_finite(loss: f64, phase: &str, step: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence(format!(
            "{phase} loss became {loss} at step {step}; lower lr_scale or raise warmup"
        )))
    }
}

/// Phase 1 fits the chapter tables (and the attention encoder, if any) to the
/// smoothed vertex loss. Phase 2 freezes them and fits the relation network
/// to `λ_r` times the triplet loss. Both phases are full-batch Adam with the
/// inverse-square-root schedule.
pub fn train_ekg(
    corpus: &Corpus,
    ekg: &GlobalEKG,
    config: &EmbedConfig,
    paragraph_window: usize,
    seed: u64,
) -> Result<(EkgEmbeddings, EkgTrainReport)> {
    config.validate().map_err(Error::Config)?;
    let vocab = (config.encoder == EncoderKind::Attention).then(|| build_vocab(corpus, 1));
    let mut emb = EkgEmbeddings::new(&ekg.novel_id, ekg.num_steps(), ekg.num_entities, config, vocab, seed)?;
    let mut report = EkgTrainReport::default();

    train_vertices(&mut emb, corpus, paragraph_window, &mut report)?;
    train_relations(&mut emb, corpus, ekg, seed, &mut report)?;
    Ok((emb, report))
}

fn train_vertices(
    emb: &mut EkgEmbeddings,
    corpus: &Corpus,
    paragraph_window: usize,
    report: &mut EkgTrainReport,
) -> Result<()> {
    let config = emb.config.clone();
    let examples = vertex_examples(corpus, config.context_window, paragraph_window);
    report.vertex_examples = examples.len();
    if examples.is_empty() {
        return Ok(());
    }
    let steps = emb.steps();
    let by_chapter: Vec<Vec<&VertexExample>> = (1..=steps)
        .map(|t| examples.iter().filter(|e| e.t == t).collect())
        .collect();
    let targets: Vec<Vec<usize>> = by_chapter
        .iter()
        .map(|xs| xs.iter().map(|e| e.entity).collect())
        .collect();
    let sentences: Vec<Vec<(&[String], usize)>> = by_chapter
        .iter()
        .map(|xs| xs.iter().map(|e| (e.tokens.as_slice(), e.mask_pos)).collect())
        .collect();
    // Frozen features only need computing once.
    let cached: Option<Vec<Tensor<f32>>> = if emb.encoder.has_params() {
        None
    } else {
        let tape = Tape::inference(&emb.store);
        Some(
            sentences
                .iter()
                .map(|s| {
                    emb.encoder
                        .encode_masked_batch(&tape, s)
                        .map(|v| v.value().as_ref().clone())
                })
                .collect::<std::result::Result<_, _>>()?,
        )
    };

    emb.store.set_trainable_prefix(RelationNetwork::PREFIX, false);
    let mut adam = AdamState::new(&emb.store, AdamConfig::default());
    for step in 1..=config.vertex_steps {
        let (loss, grads) = {
            let tape = Tape::new(&emb.store);
            let mut batches = Vec::with_capacity(steps);
            for (k, tg) in targets.iter().enumerate() {
                if tg.is_empty() {
                    continue;
                }
                let features = match &cached {
                    Some(c) => tape.constant(c[k].clone()),
                    None => emb.encoder.encode_masked_batch(&tape, &sentences[k])?,
                };
                batches.push(ChapterBatch {
                    t: k + 1,
                    features,
                    targets: tg.clone(),
                });
            }
            let loss = vertex_loss(&tape, &emb.table, &batches, config.smoothing, config.label_smoothing)?;
            let value = f64::from(loss.item());
            check_finite(value, "vertex", step)?;
            (value, tape.backward(loss)?.into_params())
        };
        report.vertex_losses.push(loss);
        let lr = noam_lr(step as u64, config.warmup, config.dim, config.lr_scale)?;
        adam.step(&mut emb.store, &grads, lr)?;
        if step % 50 == 0 || step == 1 {
            debug!("vertex step {step}: loss {loss:.4} lr {lr:.2e}");
        }
    }
    emb.store.set_trainable_prefix(RelationNetwork::PREFIX, true);
    if let Some(last) = report.vertex_losses.last() {
        info!("vertex phase done: {} examples, final loss {last:.4}", examples.len());
    }
    Ok(())
}

fn train_relations(
    emb: &mut EkgEmbeddings,
    corpus: &Corpus,
    ekg: &GlobalEKG,
    seed: u64,
    report: &mut EkgTrainReport,
) -> Result<()> {
    let config = emb.config.clone();
    let examples = edge_examples(corpus, ekg, config.max_sentence_tokens);
    report.edge_examples = examples.len();
    if examples.is_empty() || config.edge_steps == 0 {
        return Ok(());
    }
    emb.store.set_trainable_prefix(VertexTable::PREFIX, false);
    emb.store.set_trainable_prefix("encoder", false);

    let sentence_features: Tensor<f32> = {
        let tape = Tape::inference(&emb.store);
        let s: Vec<&[String]> = examples.iter().map(|e| e.tokens.as_slice()).collect();
        emb.encoder.encode_cls_batch(&tape, &s)?.value().as_ref().clone()
    };

    let mut adam = AdamState::new(&emb.store, AdamConfig::default());
    for epoch in 1..=config.edge_steps {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch as u64);
        let (triplets, kept, skipped) = sample_negatives(ekg, &examples, &mut rng);
        report.skipped_negatives += skipped;
        if triplets.is_empty() {
            report.edge_losses.push(0.0);
            continue;
        }
        let (loss, grads) = {
            let tape = Tape::new(&emb.store);
            let sentences = tape.constant(sentence_features.clone()).gather_rows(&kept)?;
            let raw = edge_loss(&tape, &emb.table, &emb.rn, sentences, &triplets, config.margin)?;
            let value = f64::from(raw.item());
            check_finite(value, "edge", epoch)?;
            let weighted = raw.scale(config.lambda_r as f32);
            (value, tape.backward(weighted)?.into_params())
        };
        report.edge_losses.push(loss);
        let lr = noam_lr(epoch as u64, config.warmup, config.dim, config.lr_scale)?;
        adam.step(&mut emb.store, &grads, lr)?;
    }
    emb.store.set_trainable_prefix(VertexTable::PREFIX, true);
    emb.store.set_trainable_prefix("encoder", true);
    info!(
        "edge phase done: {} relation instances, {} negatives unavailable",
        examples.len(),
        report.skipped_negatives
    );
    Ok(())
}
