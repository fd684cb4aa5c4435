//! Corpus ingestion: tokenization, vocabulary, POS tagging and dataset formats.

mod formats;
mod postag;
mod tokenize;
mod vocab;

use std::fs;
use std::path::Path;

pub use formats::{
    canonicalize_bios, is_well_formed, load_classification_tsv, load_conll, parse_classification, parse_conll, Bios,
    ConllReport, Input, Label, LabeledExample,
};
pub use postag::{pos_tag, tag_word};
pub use tokenize::{split_words, tokenize, Pos, Sentence};
pub use vocab::{
    build_vocab, count_tokens, TokenId, Vocab, CLS, CLS_ID, MASK, MASK_ID, NUM_SPECIAL, PAD, PAD_ID, SEP, SEP_ID, UNK,
    UNK_ID,
};

use crate::error::{Error, Result};

/// Reads a one-sentence-per-line corpus, tokenizes and POS-tags every
/// non-empty line. Sentences longer than `max_len` are truncated.
pub fn read_tagged_corpus(path: &Path, vocab: &Vocab, max_len: usize) -> Result<Vec<Sentence>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(tag_lines(text.lines(), vocab, max_len))
}

pub fn tag_lines<'a>(lines: impl IntoIterator<Item = &'a str>, vocab: &Vocab, max_len: usize) -> Vec<Sentence> {
    lines
        .into_iter()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut s = tokenize(l, vocab);
            s.truncate(max_len);
            pos_tag(s)
        })
        .collect()
}
