//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::fs;
use std::path::Path;

use ekg_core::metrics::EvalPair;
use rand::Rng;

pub fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

/// Counts occurrences of `gram` in `seq` by scanning every offset.
pub fn occurrences(seq: &[String], gram: &[String]) -> usize {
    if seq.len() < gram.len() {
        return 0;
    }
    (0..=seq.len() - gram.len())
        .filter(|&s| &seq[s..s + gram.len()] == gram)
        .count()
}

pub fn oracle_bleu(pairs: &[EvalPair]) -> f64 {
    let mut matched = [0f64; 4];
    let mut total = [0f64; 4];
    let (mut c, mut r) = (0f64, 0f64);
    for p in pairs {
        let h = &p.hypothesis;
        c += h.len() as f64;
        let mut best = p.references[0].len();
        for rf in &p.references {
            let d = rf.len().abs_diff(h.len());
            let bd = best.abs_diff(h.len());
            if d < bd || (d == bd && rf.len() < best) {
                best = rf.len();
            }
        }
        r += best as f64;
        for n in 1..=4usize {
            if h.len() < n {
                continue;
            }
            for s in 0..=h.len() - n {
                let gram = &h[s..s + n];
                total[n - 1] += 1.0;
                // Each position gets credit only if its occurrence index is within the clip.
                let earlier = (0..s).filter(|&q| q + n <= h.len() && &h[q..q + n] == gram).count();
                let clip = p.references.iter().map(|rf| occurrences(rf, gram)).max().unwrap();
                if earlier < clip {
                    matched[n - 1] += 1.0;
                }
            }
        }
    }
    if matched.contains(&0.0) {
        return 0.0;
    }
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    let geo: f64 = (0..4).map(|i| (matched[i] / total[i]).ln()).sum::<f64>() / 4.0;
    100.0 * bp * geo.exp()
}

pub fn lcs_table(a: &[String], b: &[String]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    t[a.len()][b.len()]
}

pub fn oracle_rouge(pairs: &[EvalPair]) -> f64 {
    let mut sum = 0.0;
    for p in pairs {
        let mut best: f64 = 0.0;
        for rf in &p.references {
            let l = lcs_table(&p.hypothesis, rf) as f64;
            if l > 0.0 {
                let prec = l / p.hypothesis.len() as f64;
                let rec = l / rf.len() as f64;
                best = best.max(2.0 * prec * rec / (prec + rec));
            }
        }
        sum += best;
    }
    sum / pairs.len() as f64
}

pub fn random_seq(rng: &mut impl Rng, min: usize) -> Vec<String> {
    let len = rng.gen_range(min..12);
    (0..len)
        .map(|_| ["a", "b", "c"][rng.gen_range(0..3)].to_string())
        .collect()
}

pub fn random_corpus(rng: &mut impl Rng) -> Vec<EvalPair> {
    (0..rng.gen_range(1..6))
        .map(|_| {
            let refs = (0..rng.gen_range(1..6)).map(|_| random_seq(rng, 1)).collect();
            EvalPair::new(random_seq(rng, 0), refs)
        })
        .collect()
}

/// Every file under `root` with its contents, sorted by relative path.
pub fn snapshot(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
