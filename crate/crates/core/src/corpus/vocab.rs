use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::corpus::tokenize::split_words;
use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

pub const PAD_ID: TokenId = 0;
pub const UNK_ID: TokenId = 1;
pub const CLS_ID: TokenId = 2;
pub const SEP_ID: TokenId = 3;
pub const MASK_ID: TokenId = 4;

/// Number of reserved ids at the front of every vocabulary.
pub const NUM_SPECIAL: usize = 5;

const SPECIALS: [&str; NUM_SPECIAL] = [PAD, UNK, CLS, SEP, MASK];

/// Dense surface ↔ id mapping. The five special tokens always occupy ids 0..5.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocab {
    /// Builds a vocabulary from already-ordered corpus surfaces. Duplicates and
    /// surfaces that collide with a special token are dropped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for special in SPECIALS {
            vocab.push(special.to_string());
        }
        for token in tokens {
            let token = token.into();
            if !vocab.index.contains_key(&token) {
                vocab.push(token);
            }
        }
        vocab
    }

    fn push(&mut self, token: String) {
        let id = self.tokens.len() as TokenId;
        self.index.insert(token.clone(), id);
        self.tokens.push(token);
    }

    /// Counts whitespace/punctuation tokens over `lines` and keeps those with
    /// frequency ≥ `min_freq`, most frequent first, ties broken lexicographically.
    /// `max_size` caps the number of non-special entries.
    pub fn build<'a>(lines: impl IntoIterator<Item = &'a str>, min_freq: usize, max_size: Option<usize>) -> Self {
        let counts = count_tokens(lines);
        let mut entries: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_freq.max(1)).collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        if let Some(max) = max_size {
            entries.truncate(max);
        }
        Vocab::from_tokens(entries.into_iter().map(|(t, _)| t))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == NUM_SPECIAL
    }

    pub fn id(&self, surface: &str) -> TokenId {
        self.index.get(surface).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, surface: &str) -> Option<TokenId> {
        self.index.get(surface).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_special(id: TokenId) -> bool {
        (id as usize) < NUM_SPECIAL
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for token in &self.tokens {
            writeln!(out, "{token}").expect("write to Vec");
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens: Vec<&str> = text.lines().collect();
        if tokens.len() < NUM_SPECIAL || tokens[..NUM_SPECIAL] != SPECIALS {
            return Err(Error::format(
                path,
                1,
                "vocabulary file must start with [PAD] [UNK] [CLS] [SEP] [MASK]",
            ));
        }
        let mut vocab = Vocab::from_tokens(std::iter::empty::<String>());
        for (i, token) in tokens[NUM_SPECIAL..].iter().enumerate() {
            if vocab.index.contains_key(*token) {
                return Err(Error::format(
                    path,
                    i + NUM_SPECIAL + 1,
                    format!("duplicate token {token:?}"),
                ));
            }
            vocab.push(token.to_string());
        }
        Ok(vocab)
    }
}

/// Token frequencies over raw lines using the same splitter as [`tokenize`](crate::corpus::tokenize).
pub fn count_tokens<'a>(lines: impl IntoIterator<Item = &'a str>) -> HashMap<String, usize> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for line in lines {
        for word in split_words(line) {
            *counts.entry(word).or_default() += 1;
        }
    }
    counts
}

/// Reads a one-sentence-per-line corpus and builds its vocabulary.
pub fn build_vocab(corpus_path: &Path, min_freq: usize, max_size: Option<usize>) -> Result<Vocab> {
    if min_freq == 0 {
        return Err(Error::Config("min_freq must be at least 1".into()));
    }
    let text = fs::read_to_string(corpus_path).map_err(|e| Error::io(corpus_path, e))?;
    if text.lines().all(|l| split_words(l).is_empty()) {
        return Err(Error::EmptyVocab(corpus_path.to_path_buf()));
    }
    Ok(Vocab::build(text.lines(), min_freq, max_size))
}
