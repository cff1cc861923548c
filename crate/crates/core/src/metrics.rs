//! Corpus-level BLEU with multi-reference clipping and ROUGE-L F-scores.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One generated sequence and the references it is judged against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPair<T = String> {
    pub hypothesis: Vec<T>,
    pub references: Vec<Vec<T>>,
}

impl<T> EvalPair<T> {
    pub fn new(hypothesis: Vec<T>, references: Vec<Vec<T>>) -> Self {
        Self { hypothesis, references }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    /// On a 0 to 100 scale.
    pub bleu: f64,
    /// Modified n-gram precisions for n = 1..=4.
    pub precisions: [f64; 4],
    pub brevity_penalty: f64,
    /// Hypothesis length over effective reference length.
    pub length_ratio: f64,
    pub hypothesis_length: usize,
    pub reference_length: usize,
}

/// The report written by the evaluation stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub bleu: f64,
    pub precisions: [f64; 4],
    pub bp: f64,
    pub rouge_l: f64,
}

fn validate<T>(pairs: &[EvalPair<T>]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::Contract("cannot score an empty set of pairs".into()));
    }
    for (i, p) in pairs.iter().enumerate() {
        if p.references.is_empty() {
            return Err(Error::Contract(format!("pair {i} has no reference")));
        }
        if p.references.iter().any(Vec::is_empty) {
            return Err(Error::Contract(format!("pair {i} has an empty reference")));
        }
    }
    Ok(())
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Reference length closest to `len`; the shorter one wins ties.
fn closest_length<T>(refs: &[Vec<T>], len: usize) -> usize {
    refs.iter()
        .map(Vec::len)
        .min_by_key(|&r| (r.abs_diff(len), r))
        .unwrap_or(0)
}

pub fn bleu_corpus<T: Eq + Hash>(pairs: &[EvalPair<T>]) -> Result<BleuReport> {
    validate(pairs)?;
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    let (mut hyp_len, mut ref_len) = (0, 0);
    for pair in pairs {
        hyp_len += pair.hypothesis.len();
        ref_len += closest_length(&pair.references, pair.hypothesis.len());
        for n in 1..=4 {
            let hyp = ngram_counts(&pair.hypothesis, n);
            let mut max_ref: HashMap<&[T], usize> = HashMap::new();
            for r in &pair.references {
                for (g, c) in ngram_counts(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            for (g, c) in hyp {
                matched[n - 1] += c.min(max_ref.get(g).copied().unwrap_or(0));
                total[n - 1] += c;
            }
        }
    }
    let precisions = std::array::from_fn(|i| {
        if total[i] == 0 {
            0.0
        } else {
            matched[i] as f64 / total[i] as f64
        }
    });
    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    let bleu = if matched.contains(&0) {
        0.0
    } else {
        let log_mean = precisions.iter().map(|p: &f64| p.ln()).sum::<f64>() / 4.0;
        100.0 * brevity_penalty * log_mean.exp()
    };
    Ok(BleuReport {
        bleu,
        precisions,
        brevity_penalty,
        length_ratio: if ref_len == 0 {
            0.0
        } else {
            hyp_len as f64 / ref_len as f64
        },
        hypothesis_length: hyp_len,
        reference_length: ref_len,
    })
}

/// Length of the longest common subsequence, in linear space.
pub fn lcs_length<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// LCS-based F-score (β = 1) of one hypothesis against one reference.
pub fn rouge_l_pair<T: Eq>(hypothesis: &[T], reference: &[T]) -> f64 {
    let lcs = lcs_length(hypothesis, reference);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / hypothesis.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

/// Mean over pairs of the best ROUGE-L F-score among each pair's references.
pub fn rouge_l<T: Eq>(pairs: &[EvalPair<T>]) -> Result<f64> {
    validate(pairs)?;
    let mut scores: Vec<f64> = pairs
        .iter()
        .map(|p| {
            p.references
                .iter()
                .map(|r| rouge_l_pair(&p.hypothesis, r))
                .fold(0.0, f64::max)
        })
        .collect();
    // Summing in sorted order makes the mean independent of pair order.
    scores.sort_by(f64::total_cmp);
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

pub fn evaluate<T: Eq + Hash>(pairs: &[EvalPair<T>]) -> Result<MetricsReport> {
    let bleu = bleu_corpus(pairs)?;
    Ok(MetricsReport {
        bleu: bleu.bleu,
        precisions: bleu.precisions,
        bp: bleu.brevity_penalty,
        rouge_l: rouge_l(pairs)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn closest_reference_prefers_shorter_on_tie() {
        let refs = vec![toks("a b c d e f"), toks("a b")];
        assert_eq!(closest_length(&refs, 4), 2);
    }

    #[test]
    fn lcs_small_cases() {
        assert_eq!(lcs_length(&toks("a b c"), &toks("a c b")), 2);
        assert_eq!(lcs_length::<String>(&[], &toks("a")), 0);
    }

    #[test]
    fn empty_hypothesis_scores_zero() {
        let pairs = vec![EvalPair::new(vec![], vec![toks("a b")])];
        let r = bleu_corpus(&pairs).unwrap();
        assert_eq!(r.bleu, 0.0);
        assert_eq!(rouge_l(&pairs).unwrap(), 0.0);
    }

    #[test]
    fn empty_reference_is_rejected() {
        let pairs = vec![EvalPair::new(toks("a"), vec![vec![]])];
        assert!(bleu_corpus(&pairs).is_err());
    }
}
