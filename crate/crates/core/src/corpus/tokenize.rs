use serde::{Deserialize, Serialize};

/// How raw text becomes tokens. Character mode suits CJK text and needs no
/// word segmenter; whitespace mode is for Latin-script fixtures.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tokenization {
    #[default]
    Char,
    Whitespace,
}

impl Tokenization {
    pub fn tokenize(self, text: &str) -> Vec<String> {
        match self {
            Tokenization::Char => text.chars().filter(|c| !c.is_whitespace()).map(String::from).collect(),
            Tokenization::Whitespace => text.split_whitespace().map(String::from).collect(),
        }
    }

    /// Tokenizes a chapter and records where each paragraph starts. A
    /// paragraph break is one or more blank lines.
    pub fn tokenize_paragraphs(self, text: &str) -> (Vec<String>, Vec<usize>) {
        let mut tokens = Vec::new();
        let mut starts = Vec::new();
        let mut in_paragraph = false;
        for line in text.lines() {
            if line.trim().is_empty() {
                in_paragraph = false;
                continue;
            }
            let line_tokens = self.tokenize(line);
            if line_tokens.is_empty() {
                continue;
            }
            if !in_paragraph {
                starts.push(tokens.len());
                in_paragraph = true;
            }
            tokens.extend(line_tokens);
        }
        if starts.is_empty() {
            starts.push(0);
        }
        (tokens, starts)
    }

    pub fn join(self, tokens: &[String]) -> String {
        match self {
            Tokenization::Char => tokens.concat(),
            Tokenization::Whitespace => tokens.join(" "),
        }
    }
}
