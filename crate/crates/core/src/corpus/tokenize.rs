use serde::{Deserialize, Serialize};

use crate::corpus::vocab::{TokenId, Vocab};

/// Coarse part-of-speech classes used by the miner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pos {
    Noun,
    Adj,
    Adv,
    Verb,
    Other,
}

impl Pos {
    pub fn parse(tag: &str) -> Option<Pos> {
        match tag.to_ascii_uppercase().as_str() {
            "NOUN" | "NN" | "NNS" | "NNP" | "NNPS" | "PROPN" => Some(Pos::Noun),
            "ADJ" | "JJ" | "JJR" | "JJS" => Some(Pos::Adj),
            "ADV" | "RB" | "RBR" | "RBS" => Some(Pos::Adv),
            "VERB" | "VB" | "VBD" | "VBG" | "VBN" | "VBP" | "VBZ" => Some(Pos::Verb),
            "OTHER" | "_" | "X" => Some(Pos::Other),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Pos::Noun => "NOUN",
            Pos::Adj => "ADJ",
            Pos::Adv => "ADV",
            Pos::Verb => "VERB",
            Pos::Other => "OTHER",
        }
    }
}

/// A tokenized sentence. `tokens`, `surfaces` and `pos` (when present) are aligned.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Sentence {
    pub tokens: Vec<TokenId>,
    pub surfaces: Vec<String>,
    pub pos: Option<Vec<Pos>>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn pos_at(&self, i: usize) -> Option<Pos> {
        self.pos.as_ref().map(|p| p[i])
    }

    /// Builds a sentence from surfaces that are already split and lowercased.
    pub fn from_surfaces(surfaces: Vec<String>, vocab: &Vocab) -> Self {
        let tokens = surfaces.iter().map(|s| vocab.id(s)).collect();
        Sentence {
            tokens,
            surfaces,
            pos: None,
        }
    }

    /// Keeps the first `max_len` tokens.
    pub fn truncate(&mut self, max_len: usize) {
        self.tokens.truncate(max_len);
        self.surfaces.truncate(max_len);
        if let Some(pos) = &mut self.pos {
            pos.truncate(max_len);
        }
    }
}

/// Lowercased word splitting: runs of alphanumeric characters form a word,
/// every other non-space character is a token of its own.
pub fn split_words(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for ch in line.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
            if !ch.is_whitespace() {
                out.push(ch.to_lowercase().collect());
            }
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

pub fn tokenize(raw_line: &str, vocab: &Vocab) -> Sentence {
    Sentence::from_surfaces(split_words(raw_line), vocab)
}
