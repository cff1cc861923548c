use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::workspace::{Stage, Workspace};
use super::{generate, report_stats, PipelineConfig, SyntheticCorpus};
use crate::corpus::{build_vocab, load_corpus, Corpus, Vocabulary};
use crate::ekg::{build_global_ekg, GlobalEKG};
use crate::embed::{train_ekg, EkgEmbeddings};
use crate::error::{io_err, Error, Result};
use crate::graph2seq::{
    beam_decode, build_examples, evaluate_teacher_forced, train_g2s, G2sCheckpoint, G2sConfig, G2sExample,
    TeacherForced,
};
use crate::metrics::{evaluate, EvalPair, MetricsReport};

pub const CORPUS_FILE: &str = "corpus.json";
pub const VOCAB_FILE: &str = "vocab.json";
pub const STATS_FILE: &str = "stats.json";
pub const EKG_FILE: &str = "ekg.json";
pub const TOPOLOGY_FILE: &str = "topology.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const EKG_REPORT_FILE: &str = "report.json";
pub const MODEL_FILE: &str = "model.bin";
pub const MODEL_SIDECAR_FILE: &str = "model.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const G2S_REPORT_FILE: &str = "report.json";
pub const COMMENTS_FILE: &str = "comments.jsonl";
pub const METRICS_FILE: &str = "metrics.json";

/// What a stage wrote and a short human-readable summary.
#[derive(Clone, Debug)]
pub struct StageOutput {
    pub artifacts: Vec<PathBuf>,
    pub summary: String,
}

/// Generated comments for one passage, best first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedComments {
    pub passage_id: String,
    pub comments: Vec<ScoredComment>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredComment {
    pub text: String,
    pub score: f64,
}

/// Summary written next to the trained generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct G2sRunReport {
    pub mode: String,
    pub epochs: usize,
    pub steps: usize,
    pub losses: Vec<f64>,
    pub teacher_forced_loss: f64,
    pub teacher_forced_accuracy: f64,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(io_err(path))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Runs one stage under the workspace lock and records its artifacts.
pub fn run_stage(ws: &Workspace, stage: Stage, config: &PipelineConfig) -> Result<StageOutput> {
    config.validate()?;
    let _lock = ws.lock()?;
    info!("running stage {stage}");
    let out = match stage {
        Stage::Synth => synth(ws, config),
        Stage::Ingest => ingest(ws, config),
        Stage::Stats => stats(ws, config),
        Stage::BuildEkg => build_ekg(ws, config),
        Stage::TrainEkg => train_embeddings(ws, config),
        Stage::TrainG2s => train_generator(ws, config),
        Stage::Generate => generate_comments(ws, config),
        Stage::Evaluate => evaluate_comments(ws, config),
    }?;
    ws.record(stage, config, &out.artifacts)?;
    Ok(out)
}

/// Every stage from `synth` through `evaluate`.
pub fn run_all(ws: &Workspace, config: &PipelineConfig) -> Result<Vec<StageOutput>> {
    Stage::ALL.iter().map(|&s| run_stage(ws, s, config)).collect()
}

fn synth(ws: &Workspace, config: &PipelineConfig) -> Result<StageOutput> {
    let dir = ws.fresh_stage_dir(Stage::Synth)?;
    generate(&config.synth, config.seed)?.write_to(&dir)?;
    Ok(StageOutput {
        artifacts: [
            SyntheticCorpus::NOVEL_FILE,
            SyntheticCorpus::LEXICON_FILE,
            SyntheticCorpus::PASSAGES_FILE,
        ]
        .iter()
        .map(|f| dir.join(f))
        .collect(),
        summary: format!(
            "synthetic corpus: {} chapters, {} entities, {} passages",
            config.synth.chapters, config.synth.entities, config.synth.passages
        ),
    })
}

fn input_path(ws: &Workspace, given: &Option<PathBuf>, file: &str) -> Result<PathBuf> {
    match given {
        Some(p) if p.is_file() => Ok(p.clone()),
        Some(p) => Err(Error::Io {
            path: p.clone(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
        }),
        None => ws.require(Stage::Synth, file),
    }
}

fn ingest(ws: &Workspace, config: &PipelineConfig) -> Result<StageOutput> {
    let novel = input_path(ws, &config.input.novel, SyntheticCorpus::NOVEL_FILE)?;
    let lexicon = input_path(ws, &config.input.lexicon, SyntheticCorpus::LEXICON_FILE)?;
    let passages = input_path(ws, &config.input.passages, SyntheticCorpus::PASSAGES_FILE)?;
    let (novel, lexicon, passages) = load_corpus(&novel, &lexicon, &passages, config.corpus.tokenization)?;
    let corpus = Corpus::prepare(novel, lexicon, passages, &config.corpus);
    if corpus.passages.is_empty() {
        warn!("no passage survived filtering");
    }
    let vocab = build_vocab(&corpus, config.corpus.min_freq);
    let dir = ws.fresh_stage_dir(Stage::Ingest)?;
    let (cp, vp) = (dir.join(CORPUS_FILE), dir.join(VOCAB_FILE));
    write_json(&cp, &corpus)?;
    write_json(&vp, &vocab)?;
    Ok(StageOutput {
        artifacts: vec![cp, vp],
        summary: format!(
            "{} chapters, {} passages, {} mentions, vocabulary of {}",
            corpus.novel.num_chapters(),
            corpus.passages.len(),
            corpus.mentions.len(),
            vocab.len()
        ),
    })
}

fn load_ingested(ws: &Workspace) -> Result<(Corpus, Vocabulary)> {
    Ok((
        read_json(&ws.require(Stage::Ingest, CORPUS_FILE)?)?,
        read_json(&ws.require(Stage::Ingest, VOCAB_FILE)?)?,
    ))
}

fn stats(ws: &Workspace, config: &PipelineConfig) -> Result<StageOutput> {
    let (corpus, _) = load_ingested(ws)?;
    let report = report_stats(&corpus, config.corpus.paragraph_window);
    let dir = ws.fresh_stage_dir(Stage::Stats)?;
    let path = dir.join(STATS_FILE);
    write_json(&path, &report)?;
    Ok(StageOutput {
        artifacts: vec![path],
        summary: report.to_string(),
    })
}

fn build_ekg(ws: &Workspace, config: &PipelineConfig) -> Result<StageOutput> {
    let (corpus, _) = load_ingested(ws)?;
    let ekg = build_global_ekg(
        &corpus.novel,
        &corpus.mentions,
        corpus.lexicon.len(),
        config.corpus.paragraph_window,
    );
    let dir = ws.fresh_stage_dir(Stage::BuildEkg)?;
    let (ep, tp) = (dir.join(EKG_FILE), dir.join(TOPOLOGY_FILE));
    write_json(&ep, &ekg)?;
    write_json(&tp, &ekg.topology_json())?;
    Ok(StageOutput {
        artifacts: vec![ep, tp],
        summary: format!(
            "{} chapter graphs, {} edges, {} relation instances",
            ekg.num_steps(),
            ekg.num_edges(),
            ekg.num_relation_instances()
        ),
    })
}

fn load_ekg(ws: &Workspace) -> Result<GlobalEKG> {
    read_json(&ws.require(Stage::BuildEkg, EKG_FILE)?)
}

fn train_embeddings(ws: &Workspace, config: &PipelineConfig) -> Result<StageOutput> {
    let (corpus, _) = load_ingested(ws)?;
    let ekg = load_ekg(ws)?;
    let (emb, report) = train_ekg(
        &corpus,
        &ekg,
        &config.embed,
        config.corpus.paragraph_window,
        config.seed,
    )?;
    let dir = ws.fresh_stage_dir(Stage::TrainEkg)?;
    let (bp, rp) = (dir.join(EMBEDDINGS_FILE), dir.join(EKG_REPORT_FILE));
    emb.save(&bp)?;
    write_json(&rp, &report)?;
    Ok(StageOutput {
        artifacts: vec![bp, rp],
        summary: format!(
            "vertex loss {:.4} -> {:.4}, edge loss {:.4} -> {:.4}",
            report.vertex_losses.first().copied().unwrap_or(f64::NAN),
            report.vertex_losses.last().copied().unwrap_or(f64::NAN),
            report.edge_losses.first().copied().unwrap_or(f64::NAN),
            report.edge_losses.last().copied().unwrap_or(f64::NAN),
        ),
    })
}

/// Corpus, vocabulary and materialized examples for generator stages.
fn load_examples(ws: &Workspace, config: &PipelineConfig) -> Result<(Corpus, Vocabulary, Vec<G2sExample>, usize)> {
    let (corpus, vocab) = load_ingested(ws)?;
    let ekg = load_ekg(ws)?;
    let emb = EkgEmbeddings::load(&ws.require(Stage::TrainEkg, EMBEDDINGS_FILE)?)?;
    let examples = build_examples(
        &corpus,
        &ekg,
        &emb,
        &vocab,
        config.generator.k,
        config.generator.max_passage_len,
        config.max_comment_len,
    )?;
    Ok((corpus, vocab, examples, emb.dim()))
}

fn train_generator(ws: &Workspace, config: &PipelineConfig) -> Result<StageOutput> {
    let (_, vocab, examples, feature_dim) = load_examples(ws, config)?;
    let dir = ws.fresh_stage_dir(Stage::TrainG2s)?;
    let checkpoint = dir.join(CHECKPOINT_FILE);
    let fresh = || G2sCheckpoint::new(&config.generator, vocab.clone(), feature_dim, config.seed);
    let mut state = if checkpoint.is_file() {
        let mut saved = G2sCheckpoint::load(&checkpoint)?;
        // A longer run may continue a shorter one.
        let same_run = G2sConfig {
            epochs: config.generator.epochs,
            ..saved.config().clone()
        } == config.generator;
        if same_run
            && saved.epoch <= config.generator.epochs
            && saved.vocab.fingerprint() == vocab.fingerprint()
            && saved.model.feature_dim == feature_dim
        {
            info!("resuming generator training after epoch {}", saved.epoch);
            saved.model.config.epochs = config.generator.epochs;
            saved
        } else {
            warn!("ignoring checkpoint from a different configuration");
            fresh()?
        }
    } else {
        fresh()?
    };
    train_g2s(&mut state, &examples, config.seed, |s| s.save(&checkpoint))?;
    let tf: TeacherForced = evaluate_teacher_forced(&state, &examples)?;

    let (mp, sp, rp) = (
        dir.join(MODEL_FILE),
        dir.join(MODEL_SIDECAR_FILE),
        dir.join(G2S_REPORT_FILE),
    );
    state.save(&mp)?;
    if checkpoint.is_file() {
        fs::remove_file(&checkpoint).map_err(io_err(&checkpoint))?;
    }
    write_json(&sp, &state.sidecar())?;
    let report = G2sRunReport {
        mode: state.model.mode().name().to_string(),
        epochs: state.epoch,
        steps: state.losses.len(),
        losses: state.losses.clone(),
        teacher_forced_loss: tf.mean_loss(),
        teacher_forced_accuracy: tf.accuracy(),
    };
    write_json(&rp, &report)?;
    Ok(StageOutput {
        artifacts: vec![mp, sp, rp],
        summary: format!(
            "{} steps, final loss {:.4}, teacher-forced accuracy {:.3}",
            report.steps,
            report.losses.last().copied().unwrap_or(f64::NAN),
            report.teacher_forced_accuracy
        ),
    })
}

fn generate_comments(ws: &Workspace, config: &PipelineConfig) -> Result<StageOutput> {
    let model_path = ws.require(Stage::TrainG2s, MODEL_FILE)?;
    let (_, vocab, examples, _) = load_examples(ws, config)?;
    let state = G2sCheckpoint::load(&model_path)?;
    if state.vocab.fingerprint() != vocab.fingerprint() {
        return Err(Error::Contract(
            "generator vocabulary differs from the ingested corpus; rerun train-g2s".into(),
        ));
    }
    let tok = config.corpus.tokenization;
    let dir = ws.fresh_stage_dir(Stage::Generate)?;
    let path = dir.join(COMMENTS_FILE);
    let mut out = Vec::new();
    for ex in &examples {
        let hyps = beam_decode(
            &state.model,
            &state.store,
            &ex.passage,
            &ex.local,
            config.generator.beam,
            config.generator.max_len,
        )?;
        let record = GeneratedComments {
            passage_id: ex.passage_id.clone(),
            comments: hyps
                .iter()
                .map(|h| {
                    let tokens: Vec<String> = h.tokens.iter().map(|&t| vocab.token(t).to_string()).collect();
                    ScoredComment {
                        text: tok.join(&tokens),
                        score: h.score,
                    }
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(&path).map_err(io_err(&path))?;
    f.write_all(&out).map_err(io_err(&path))?;
    Ok(StageOutput {
        artifacts: vec![path],
        summary: format!("generated comments for {} passages", examples.len()),
    })
}

pub fn read_generated(path: &Path) -> Result<Vec<GeneratedComments>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn evaluate_comments(ws: &Workspace, config: &PipelineConfig) -> Result<StageOutput> {
    let generated = read_generated(&ws.require(Stage::Generate, COMMENTS_FILE)?)?;
    let (corpus, _) = load_ingested(ws)?;
    let tok = config.corpus.tokenization;
    let mut pairs = Vec::with_capacity(generated.len());
    for g in &generated {
        let passage =
            corpus.passages.iter().find(|p| p.id == g.passage_id).ok_or_else(|| {
                Error::Reference(format!("generated passage {:?} is not in the corpus", g.passage_id))
            })?;
        let best = g.comments.first().map(|c| tok.tokenize(&c.text)).unwrap_or_default();
        let refs = passage.comments.iter().map(|c| c.text.clone()).collect();
        pairs.push(EvalPair::new(best, refs));
    }
    let report: MetricsReport = evaluate(&pairs)?;
    let dir = ws.fresh_stage_dir(Stage::Evaluate)?;
    let path = dir.join(METRICS_FILE);
    write_json(&path, &report)?;
    Ok(StageOutput {
        artifacts: vec![path],
        summary: format!("BLEU {:.2}, ROUGE-L {:.4}", report.bleu, report.rouge_l),
    })
}

/// The generator run report, for callers that inspect training.
pub fn read_g2s_report(ws: &Workspace) -> Result<G2sRunReport> {
    read_json(&ws.require(Stage::TrainG2s, G2S_REPORT_FILE)?)
}

pub fn read_metrics(ws: &Workspace) -> Result<MetricsReport> {
    read_json(&ws.require(Stage::Evaluate, METRICS_FILE)?)
}
