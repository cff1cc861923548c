use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{Chapter, Comment, Entity, EntityKind, EntityLexicon, Novel, Passage, Span, Tokenization};
use crate::error::{io_err, Error, Result};

#[derive(Deserialize)]
struct RawNovel {
    id: String,
    title: String,
    chapters: Vec<RawChapter>,
}

#[derive(Deserialize)]
struct RawChapter {
    index: usize,
    text: String,
}

#[derive(Deserialize)]
struct RawLexicon {
    entities: Vec<RawEntity>,
}

#[derive(Deserialize)]
struct RawEntity {
    id: usize,
    name: String,
    #[serde(default)]
    aliases: Vec<String>,
    kind: EntityKind,
}

#[derive(Deserialize)]
struct RawPassage {
    chapter: usize,
    start: usize,
    end: usize,
    comments: Vec<RawComment>,
}

#[derive(Deserialize)]
struct RawComment {
    text: String,
    upvotes: u64,
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn load_novel(path: &Path, tokenization: Tokenization) -> Result<Novel> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_novel(path, &text, tokenization)
}

/// Parses novel JSON; `path` only labels errors.
pub fn parse_novel(path: &Path, text: &str, tokenization: Tokenization) -> Result<Novel> {
    let raw: RawNovel = parse_json(path, text)?;
    let mut chapters = Vec::with_capacity(raw.chapters.len());
    for (k, ch) in raw.chapters.into_iter().enumerate() {
        if ch.index != k + 1 {
            return Err(Error::Reference(format!(
                "chapter indices must run 1..T in order; position {} has index {}",
                k + 1,
                ch.index
            )));
        }
        let (tokens, paragraph_starts) = tokenization.tokenize_paragraphs(&ch.text);
        if tokens.is_empty() {
            return Err(Error::Reference(format!("chapter {} has no text", ch.index)));
        }
        chapters.push(Chapter {
            index: ch.index,
            tokens,
            paragraph_starts,
            source_indices: vec![ch.index],
        });
    }
    if chapters.is_empty() {
        return Err(Error::Reference(format!("{}: novel has no chapters", path.display())));
    }
    Ok(Novel {
        id: raw.id,
        title: raw.title,
        chapters,
    })
}

pub fn load_lexicon(path: &Path) -> Result<EntityLexicon> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_lexicon(path, &text)
}

pub fn parse_lexicon(path: &Path, text: &str) -> Result<EntityLexicon> {
    let raw: RawLexicon = parse_json(path, text)?;
    let mut entities: Vec<Entity> = raw
        .entities
        .into_iter()
        .map(|e| Entity {
            id: e.id,
            name: e.name,
            aliases: e.aliases,
            kind: e.kind,
        })
        .collect();
    entities.sort_by_key(|e| e.id);
    validate_lexicon(&entities)?;
    Ok(EntityLexicon { entities })
}

fn validate_lexicon(entities: &[Entity]) -> Result<()> {
    for (k, e) in entities.iter().enumerate() {
        if e.id != k {
            return Err(Error::Reference(format!(
                "entity ids must be dense from 0; expected {k}, found {}",
                e.id
            )));
        }
    }
    let mut owner: BTreeMap<&str, usize> = BTreeMap::new();
    for e in entities {
        for form in e.surface_forms() {
            if form.trim().is_empty() {
                return Err(Error::Reference(format!("entity {} has an empty alias", e.id)));
            }
            if let Some(&other) = owner.get(form) {
                if other != e.id {
                    return Err(Error::Reference(format!(
                        "alias {form:?} maps to entities {other} and {}",
                        e.id
                    )));
                }
            }
            owner.insert(form, e.id);
        }
    }
    Ok(())
}

/// Reads passages against the novel they annotate; spans are token offsets in
/// the original chapter.
pub fn load_passages(path: &Path, novel: &Novel, tokenization: Tokenization) -> Result<Vec<Passage>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_passages(path, &text, novel, tokenization)
}

pub fn parse_passages(path: &Path, text: &str, novel: &Novel, tokenization: Tokenization) -> Result<Vec<Passage>> {
    let mut passages = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawPassage = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        let chapter = novel.chapter(raw.chapter).ok_or_else(|| {
            Error::Reference(format!(
                "{}:{}: chapter {} outside 1..={}",
                path.display(),
                lineno + 1,
                raw.chapter,
                novel.num_chapters()
            ))
        })?;
        if raw.end <= raw.start || raw.end > chapter.len() {
            return Err(Error::Reference(format!(
                "{}:{}: span {}..{} invalid for chapter {} of {} tokens",
                path.display(),
                lineno + 1,
                raw.start,
                raw.end,
                raw.chapter,
                chapter.len()
            )));
        }
        let comments = raw
            .comments
            .into_iter()
            .map(|c| Comment {
                text: tokenization.tokenize(&c.text),
                upvotes: c.upvotes,
            })
            .filter(|c| !c.text.is_empty())
            .collect();
        passages.push(Passage {
            id: format!("p{}", passages.len()),
            chapter_index: raw.chapter,
            span: Span::new(raw.start, raw.end),
            text: chapter.tokens[raw.start..raw.end].to_vec(),
            entity_ids: BTreeSet::new(),
            comments,
        });
    }
    Ok(passages)
}

pub fn load_corpus(
    novel_path: &Path,
    lexicon_path: &Path,
    passages_path: &Path,
    tokenization: Tokenization,
) -> Result<(Novel, EntityLexicon, Vec<Passage>)> {
    let novel = load_novel(novel_path, tokenization)?;
    let lexicon = load_lexicon(lexicon_path)?;
    let passages = load_passages(passages_path, &novel, tokenization)?;
    Ok((novel, lexicon, passages))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entity(id: usize, name: &str, aliases: &[&str]) -> Entity {
        Entity {
            id,
            name: name.into(),
            aliases: aliases.iter().map(|s| s.to_string()).collect(),
            kind: EntityKind::Person,
        }
    }

    #[test]
    fn duplicate_alias_across_entities_is_rejected() {
        let lex = [entity(0, "萧炎", &["阿诺"]), entity(1, "药老", &["阿诺"])];
        assert!(matches!(validate_lexicon(&lex), Err(Error::Reference(_))));
    }

    #[test]
    fn sparse_ids_are_rejected() {
        let lex = [entity(0, "a", &[]), entity(2, "b", &[])];
        assert!(matches!(validate_lexicon(&lex), Err(Error::Reference(_))));
    }

    #[test]
    fn empty_alias_is_rejected() {
        let lex = [entity(0, "a", &[" "])];
        assert!(validate_lexicon(&lex).is_err());
    }
}
