//! Deterministic synthetic novels for desk-scale experiments.
//!
//! Each chapter links the entities along a chapter-specific cycle. Every
//! passage is one paragraph in which a linked pair meets, and its comments
//! follow the pattern `{A}与{B}{relation}{ending}` where the relation word
//! depends on the chapter. Filler paragraphs use characters disjoint from
//! every name and template word so they never produce mentions.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{parse_lexicon, parse_novel, parse_passages, Corpus, CorpusConfig};
use crate::error::{io_err, Error, Result};

const NAMES: [&str; 12] = [
    "萧炎", "药老", "纳兰", "云韵", "美杜", "海波", "林动", "青鳞", "紫妍", "古薰", "韩枫", "魂灭",
];
const PLACES: [&str; 4] = ["城中", "山上", "谷里", "殿前"];
const FILLER: &str = "天地日月星辰江河湖泊草木花鸟鱼虫春夏秋冬东西南北风雨雷电晨昏朝暮金银铜铁石土沙尘";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub chapters: usize,
    pub entities: usize,
    pub passages: usize,
    pub comments_per_passage: usize,
    /// Relation word used in comments, one per chapter (cycled).
    pub relations: Vec<String>,
    /// The first ending is the common one; the others vary one comment.
    pub endings: Vec<String>,
    /// Filler tokens added to each chapter so it survives clustering.
    pub filler_tokens_per_chapter: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            chapters: 3,
            entities: 6,
            passages: 60,
            comments_per_passage: 5,
            relations: vec!["相识".into(), "交手".into(), "结盟".into()],
            endings: vec!["真精彩".into(), "好激动".into(), "太好看".into()],
            filler_tokens_per_chapter: 1000,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth: {m}")));
        if self.chapters == 0 {
            return bad("chapters must be positive");
        }
        if !(2..=NAMES.len()).contains(&self.entities) {
            return bad(&format!("entities must lie in 2..={}", NAMES.len()));
        }
        if self.passages < self.chapters {
            return bad("need at least one passage per chapter");
        }
        if self.comments_per_passage < 3 {
            return bad("comments_per_passage must be at least 3");
        }
        if self.relations.is_empty() || self.endings.is_empty() {
            return bad("relations and endings must be non-empty");
        }
        Ok(())
    }

    /// Passages in 1-based chapter `t`: an even split, remainder first.
    pub fn passages_in(&self, t: usize) -> usize {
        self.passages / self.chapters + usize::from(t <= self.passages % self.chapters)
    }

    /// Comments that survive the bottom-20% rule.
    pub fn kept_comments_per_passage(&self) -> usize {
        self.comments_per_passage - self.comments_per_passage / 5
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub novel: serde_json::Value,
    pub lexicon: serde_json::Value,
    /// JSON Lines.
    pub passages: String,
}

impl SyntheticCorpus {
    pub const NOVEL_FILE: &'static str = "novel.json";
    pub const LEXICON_FILE: &'static str = "lexicon.json";
    pub const PASSAGES_FILE: &'static str = "passages.jsonl";

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let write = |name: &str, body: String| {
            let p = dir.join(name);
            fs::write(&p, body).map_err(io_err(&p))
        };
        write(Self::NOVEL_FILE, serde_json::to_string_pretty(&self.novel)? + "\n")?;
        write(Self::LEXICON_FILE, serde_json::to_string_pretty(&self.lexicon)? + "\n")?;
        write(Self::PASSAGES_FILE, self.passages.clone())
    }

    /// Parses and prepares the corpus without touching the filesystem.
    pub fn prepare(&self, config: &CorpusConfig) -> Result<Corpus> {
        let tok = config.tokenization;
        let novel = parse_novel(Path::new(Self::NOVEL_FILE), &self.novel.to_string(), tok)?;
        let lexicon = parse_lexicon(Path::new(Self::LEXICON_FILE), &self.lexicon.to_string())?;
        let passages = parse_passages(Path::new(Self::PASSAGES_FILE), &self.passages, &novel, tok)?;
        Ok(Corpus::prepare(novel, lexicon, passages, config))
    }
}

fn filler(rng: &mut impl Rng, len: usize) -> String {
    let chars: Vec<char> = FILLER.chars().collect();
    (0..len).map(|_| chars[rng.gen_range(0..chars.len())]).collect()
}

/// Entity pairs linked in a chapter: consecutive members of a shuffled cycle.
fn chapter_pairs(rng: &mut impl Rng, n: usize) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    if n == 2 {
        return vec![(order[0], order[1])];
    }
    (0..n).map(|k| (order[k], order[(k + 1) % n])).collect()
}

pub fn generate(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kinds = ["person", "organization", "location"];
    let lexicon = json!({
        "entities": (0..spec.entities)
            .map(|id| json!({"id": id, "name": NAMES[id], "aliases": [], "kind": kinds[id % 3]}))
            .collect::<Vec<_>>(),
    });

    let mut chapters = Vec::with_capacity(spec.chapters);
    let mut passages = String::new();
    for t in 1..=spec.chapters {
        let pairs = chapter_pairs(&mut rng, spec.entities);
        let relation = &spec.relations[(t - 1) % spec.relations.len()];
        let count = spec.passages_in(t);
        let filler_paragraphs = count.max(1);
        let filler_len = spec.filler_tokens_per_chapter.div_ceil(filler_paragraphs);

        let mut paragraphs: Vec<String> = Vec::new();
        let mut offset = 0usize;
        for k in 0..count {
            let (mut a, mut b) = pairs[k % pairs.len()];
            if rng.gen_bool(0.5) {
                std::mem::swap(&mut a, &mut b);
            }
            let place = PLACES[rng.gen_range(0..PLACES.len())];
            let text = format!("{}在{place}与{}{relation}", NAMES[a], NAMES[b]);
            let len = text.chars().count();
            let comments: Vec<_> = (0..spec.comments_per_passage)
                .map(|c| {
                    // One comment per passage takes a rarer ending.
                    let ending = if c == 1 && spec.endings.len() > 1 {
                        &spec.endings[1 + (k + t) % (spec.endings.len() - 1)]
                    } else {
                        &spec.endings[0]
                    };
                    let upvotes = (spec.comments_per_passage - c) as u64 * 10 + rng.gen_range(0..10);
                    json!({"text": format!("{}与{}{relation}{ending}", NAMES[a], NAMES[b]), "upvotes": upvotes})
                })
                .collect();
            let line = json!({"chapter": t, "start": offset, "end": offset + len, "comments": comments});
            writeln!(passages, "{line}").expect("write to string");
            paragraphs.push(text);
            offset += len;

            let fill = filler(&mut rng, filler_len);
            offset += filler_len;
            paragraphs.push(fill);
        }
        chapters.push(json!({"index": t, "text": paragraphs.join("\n\n")}));
    }

    Ok(SyntheticCorpus {
        novel: json!({"id": format!("synthetic-{seed}"), "title": "Synthetic novel", "chapters": chapters}),
        lexicon,
        passages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filler_shares_no_character_with_names_or_templates() {
        let spec = SyntheticSpec::default();
        let words: String = NAMES
            .iter()
            .chain(PLACES.iter())
            .map(|s| s.to_string())
            .chain(spec.relations.iter().cloned())
            .chain(spec.endings.iter().cloned())
            .chain(["在".to_string(), "与".to_string()])
            .collect();
        assert!(FILLER.chars().all(|c| !words.contains(c)));
    }

    #[test]
    fn same_seed_same_corpus() {
        let s = SyntheticSpec::default();
        assert_eq!(generate(&s, 3).unwrap(), generate(&s, 3).unwrap());
        assert_ne!(generate(&s, 3).unwrap(), generate(&s, 4).unwrap());
    }

    #[test]
    fn passages_split_evenly() {
        let s = SyntheticSpec {
            passages: 7,
            ..SyntheticSpec::default()
        };
        assert_eq!((1..=3).map(|t| s.passages_in(t)).collect::<Vec<_>>(), vec![3, 2, 2]);
    }
}
