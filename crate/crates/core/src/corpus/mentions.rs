use std::collections::HashMap;

use super::{EntityLexicon, Mention, Novel, Passage, Span, Tokenization};

/// Leftmost-longest, non-overlapping alias matching over each chapter.
/// Matches never cross a paragraph boundary.
pub fn match_mentions(novel: &Novel, lexicon: &EntityLexicon, tokenization: Tokenization) -> Vec<Mention> {
    // first token -> (alias tokens, entity), longest first
    let mut by_head: HashMap<&str, Vec<(Vec<String>, usize)>> = HashMap::new();
    let mut alias_tokens = Vec::new();
    for e in &lexicon.entities {
        for form in e.surface_forms() {
            let toks = tokenization.tokenize(form);
            if !toks.is_empty() {
                alias_tokens.push((toks, e.id));
            }
        }
    }
    for (toks, id) in &alias_tokens {
        by_head.entry(toks[0].as_str()).or_default().push((toks.clone(), *id));
    }
    for list in by_head.values_mut() {
        list.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.1.cmp(&b.1)));
    }

    let mut mentions = Vec::new();
    for ch in &novel.chapters {
        for para in ch.paragraphs(usize::MAX) {
            let tokens = &ch.tokens[para.start..para.end];
            let mut pos = 0;
            while pos < tokens.len() {
                let hit = by_head
                    .get(tokens[pos].as_str())
                    .and_then(|cands| cands.iter().find(|(alias, _)| tokens[pos..].starts_with(alias)));
                match hit {
                    Some((alias, id)) => {
                        let start = para.start + pos;
                        mentions.push(Mention {
                            chapter_index: ch.index,
                            span: Span::new(start, start + alias.len()),
                            entity_id: *id,
                        });
                        pos += alias.len();
                    }
                    None => pos += 1,
                }
            }
        }
    }
    mentions
}

/// Sets each passage's entity set to the entities mentioned inside its span.
pub fn attach_entities(passages: &mut [Passage], mentions: &[Mention]) {
    for p in passages.iter_mut() {
        p.entity_ids = mentions
            .iter()
            .filter(|m| m.chapter_index == p.chapter_index && p.span.contains(&m.span))
            .map(|m| m.entity_id)
            .collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Chapter, Entity, EntityKind};

    fn lexicon(forms: &[(&str, &[&str])]) -> EntityLexicon {
        EntityLexicon {
            entities: forms
                .iter()
                .enumerate()
                .map(|(id, (name, aliases))| Entity {
                    id,
                    name: name.to_string(),
                    aliases: aliases.iter().map(|a| a.to_string()).collect(),
                    kind: EntityKind::Person,
                })
                .collect(),
        }
    }

    fn novel(text: &str, tok: Tokenization) -> Novel {
        let (tokens, paragraph_starts) = tok.tokenize_paragraphs(text);
        Novel {
            id: "n".into(),
            title: "t".into(),
            chapters: vec![Chapter {
                index: 1,
                tokens,
                paragraph_starts,
                source_indices: vec![1],
            }],
        }
    }

    #[test]
    fn two_aliases_two_mentions() {
        let tok = Tokenization::Whitespace;
        let m = match_mentions(&novel("A met B", tok), &lexicon(&[("A", &[]), ("B", &[])]), tok);
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].span, Span::new(0, 1));
        assert_eq!(m[1].span, Span::new(2, 3));
        assert_eq!(m[1].entity_id, 1);
    }

    #[test]
    fn longest_alias_wins_at_same_start() {
        let tok = Tokenization::Char;
        let lex = lexicon(&[("萧炎", &[]), ("萧炎大师", &[])]);
        let m = match_mentions(&novel("见萧炎大师来", tok), &lex, tok);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].entity_id, 1);
        assert_eq!(m[0].span, Span::new(1, 5));
    }

    #[test]
    fn no_alias_no_mentions() {
        let tok = Tokenization::Char;
        let m = match_mentions(&novel("山高水长", tok), &lexicon(&[("萧炎", &[])]), tok);
        assert!(m.is_empty());
    }

    #[test]
    fn matches_stop_at_paragraph_breaks() {
        let tok = Tokenization::Whitespace;
        let lex = lexicon(&[("big cat", &[])]);
        let m = match_mentions(&novel("a big\n\ncat b", tok), &lex, tok);
        assert!(m.is_empty());
    }
}
