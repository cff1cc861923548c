use serde::Serialize;

use super::train::argmax;
use super::Graph2Seq;
use crate::corpus::Vocabulary;
use crate::diffkit::{DiffError, ParamStore, Tape};
use crate::ekg::LocalEKG;

type Result<T> = std::result::Result<T, DiffError>;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Hypothesis {
    /// Generated ids, without BOS or EOS.
    pub tokens: Vec<usize>,
    /// Summed natural-log probability, EOS included when finished.
    pub log_prob: f64,
    /// Length-normalised score used for ranking.
    pub score: f64,
    /// Whether EOS was produced before the length limit.
    pub finished: bool,
}

impl Hypothesis {
    fn new(tokens: Vec<usize>, log_prob: f64, finished: bool, penalty: f64) -> Self {
        let steps = tokens.len() + usize::from(finished);
        Self {
            score: log_prob / (steps.max(1) as f64).powf(penalty),
            tokens,
            log_prob,
            finished,
        }
    }
}

/// Argmax decoding; ties go to the lowest token id.
pub fn greedy_decode(
    model: &Graph2Seq,
    store: &ParamStore<f32>,
    passage: &[usize],
    local: &LocalEKG,
) -> Result<Hypothesis> {
    let tape = Tape::inference(store);
    let memory = model.memory(&tape, passage, local)?;
    let mut prefix = vec![Vocabulary::BOS];
    let mut log_prob = 0.0;
    for _ in 0..model.config.max_len {
        let probs = model.fuse_and_decode_step(&tape, memory, &prefix, None)?;
        let best = argmax(&probs);
        log_prob += f64::from(probs[best]).ln();
        if best == Vocabulary::EOS {
            return Ok(Hypothesis::new(
                prefix[1..].to_vec(),
                log_prob,
                true,
                model.config.length_penalty,
            ));
        }
        prefix.push(best);
    }
    Ok(Hypothesis::new(
        prefix[1..].to_vec(),
        log_prob,
        false,
        model.config.length_penalty,
    ))
}

/// Beam search keeping `beam` live prefixes ranked by raw log-probability.
/// Returns the best `beam` of the completed hypotheses and of the survivors
/// cut off at `max_len`, sorted by length-normalised score.
pub fn beam_decode(
    model: &Graph2Seq,
    store: &ParamStore<f32>,
    passage: &[usize],
    local: &LocalEKG,
    beam: usize,
    max_len: usize,
) -> Result<Vec<Hypothesis>> {
    if beam == 0 {
        return Err(DiffError::Contract("beam width must be positive".into()));
    }
    let max_len = max_len.min(model.config.max_len);
    let penalty = model.config.length_penalty;
    let tape = Tape::inference(store);
    let memory = model.memory(&tape, passage, local)?;

    let mut alive: Vec<(Vec<usize>, f64)> = vec![(vec![Vocabulary::BOS], 0.0)];
    let mut done = Vec::new();
    for _ in 0..max_len {
        let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
        for (h, (prefix, lp)) in alive.iter().enumerate() {
            let probs = model.fuse_and_decode_step(&tape, memory, prefix, None)?;
            let mut ids: Vec<usize> = (0..probs.len()).collect();
            ids.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
            for &tok in ids.iter().take(beam) {
                candidates.push((h, tok, lp + f64::from(probs[tok]).ln()));
            }
        }
        // Stable: equal scores keep earlier hypotheses and lower ids first.
        candidates.sort_by(|a, b| b.2.total_cmp(&a.2));
        candidates.truncate(beam);
        let mut next = Vec::with_capacity(beam);
        for (h, tok, lp) in candidates {
            if tok == Vocabulary::EOS {
                done.push(Hypothesis::new(alive[h].0[1..].to_vec(), lp, true, penalty));
            } else {
                let mut prefix = alive[h].0.clone();
                prefix.push(tok);
                next.push((prefix, lp));
            }
        }
        alive = next;
        if alive.is_empty() {
            break;
        }
    }
    done.extend(
        alive
            .into_iter()
            .map(|(prefix, lp)| Hypothesis::new(prefix[1..].to_vec(), lp, false, penalty)),
    );
    done.sort_by(|a, b| b.score.total_cmp(&a.score));
    done.truncate(beam);
    Ok(done)
}
