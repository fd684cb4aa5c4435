//! Deterministic rule-based coarse POS tagger.
//!
//! Order of precedence: closed-class list → OTHER, shipped lexicon,
//! non-alphabetic → OTHER, suffix heuristics, and finally NOUN.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use crate::corpus::tokenize::{Pos, Sentence};

const LEXICON: &str = include_str!("../../data/pos_lexicon.tsv");
const CLOSED_CLASS: &str = include_str!("../../data/closed_class.txt");

struct Tables {
    lexicon: HashMap<&'static str, Pos>,
    closed: HashSet<&'static str>,
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let lexicon = LEXICON
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
            .filter_map(|l| {
                let (word, tag) = l.split_once('\t')?;
                Some((word, Pos::parse(tag)?))
            })
            .collect();
        let closed = CLOSED_CLASS.lines().filter(|l| !l.is_empty()).collect();
        Tables { lexicon, closed }
    })
}

/// Tag for a single lowercased surface.
pub fn tag_word(word: &str) -> Pos {
    let t = tables();
    if t.closed.contains(word) {
        return Pos::Other;
    }
    if let Some(&pos) = t.lexicon.get(word) {
        return pos;
    }
    if !word.chars().all(char::is_alphabetic) {
        return Pos::Other;
    }
    if word.len() > 4 && word.ends_with("ly") {
        return Pos::Adv;
    }
    const ADJ_SUFFIXES: [&str; 6] = ["ous", "ful", "ive", "able", "ible", "less"];
    if word.len() > 4 && ADJ_SUFFIXES.iter().any(|s| word.ends_with(s)) {
        return Pos::Adj;
    }
    if word.len() > 4 && (word.ends_with("ing") || word.ends_with("ed")) {
        return Pos::Verb;
    }
    Pos::Noun
}

/// Fills `sentence.pos`. Tags already present (e.g. from a pre-tagged CoNLL file)
/// are kept.
pub fn pos_tag(mut sentence: Sentence) -> Sentence {
    if sentence.pos.is_none() {
        sentence.pos = Some(sentence.surfaces.iter().map(|w| tag_word(w)).collect());
    }
    sentence
}
