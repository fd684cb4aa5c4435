//! Sentiment detection against mined knowledge and hybrid sentiment masking.

mod detect;
mod mask;

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub use detect::{detect, detect_with, DetectOptions, DetectionResult, PairSpan, TokenClass, WordSpan};
pub use mask::{
    build_ap_target, corrupt_token, derive_seed, mask, mask_budget, mask_random, mask_with, MaskedExample,
    MaskingConfig, PairTarget, Slot,
};

use crate::corpus::{Sentence, Vocab};
use crate::error::{Error, Result};
use crate::miner::SentimentLexicon;

/// How a corpus is turned into training examples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskingStrategy {
    /// Pair, word and common steps driven by the lexicon.
    Sentiment { detect_pairs: bool, config: MaskingConfig },
    /// Uniform random token masking with the given rate.
    RandomToken { rate: f64 },
}

impl Default for MaskingStrategy {
    fn default() -> Self {
        MaskingStrategy::Sentiment {
            detect_pairs: true,
            config: MaskingConfig::default(),
        }
    }
}

/// Masks one sentence under `strategy`.
pub fn mask_sentence(
    sentence: &Sentence,
    lexicon: &SentimentLexicon,
    vocab_size: usize,
    strategy: MaskingStrategy,
    seed: u64,
) -> MaskedExample {
    match strategy {
        MaskingStrategy::Sentiment { detect_pairs, config } => {
            let options = DetectOptions {
                detect_pairs,
                ..Default::default()
            };
            let detection = detect_with(sentence, lexicon, options);
            mask_with(sentence, &detection, vocab_size, config, seed)
        }
        MaskingStrategy::RandomToken { rate } => mask_random(sentence, vocab_size, rate, seed),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MaskingStats {
    pub sentences: usize,
    pub pairs: usize,
    pub pair_tokens: usize,
    pub word_tokens: usize,
    pub fill_tokens: usize,
}

impl MaskingStats {
    /// Share of the budgeted (word + fill) tokens that were sentiment words.
    pub fn word_fraction(&self) -> f64 {
        let total = self.word_tokens + self.fill_tokens;
        if total == 0 {
            0.0
        } else {
            self.word_tokens as f64 / total as f64
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "sentences\t{}", self.sentences).unwrap();
        writeln!(out, "masked_pairs\t{}", self.pairs).unwrap();
        writeln!(out, "pair_tokens\t{}", self.pair_tokens).unwrap();
        writeln!(out, "sentiment_word_tokens\t{}", self.word_tokens).unwrap();
        writeln!(out, "common_fill_tokens\t{}", self.fill_tokens).unwrap();
        writeln!(out, "sentiment_word_fraction\t{:.4}", self.word_fraction()).unwrap();
        writeln!(out, "common_fill_fraction\t{:.4}", 1.0 - self.word_fraction()).unwrap();
        out
    }

    fn add(&mut self, ex: &MaskedExample) {
        self.sentences += 1;
        self.pairs += ex.ap_targets.len();
        self.pair_tokens += ex.pair_positions().len();
        self.word_tokens += ex.word_positions.len();
        self.fill_tokens += ex.fill_positions.len();
    }
}

/// Masks every sentence with a seed derived from (`seed`, sentence index),
/// fanned out over `threads` workers; results keep corpus order.
pub fn mask_all(
    corpus: &[Sentence],
    lexicon: &SentimentLexicon,
    vocab: &Vocab,
    strategy: MaskingStrategy,
    seed: u64,
    threads: usize,
) -> Vec<MaskedExample> {
    let work = |offset: usize, shard: &[Sentence]| -> Vec<MaskedExample> {
        shard
            .iter()
            .enumerate()
            .map(|(i, s)| {
                mask_sentence(
                    s,
                    lexicon,
                    vocab.len(),
                    strategy,
                    derive_seed(seed, (offset + i) as u64),
                )
            })
            .collect()
    };
    let threads = threads.max(1);
    if threads == 1 || corpus.len() < 2 * threads {
        return work(0, corpus);
    }
    let chunk = corpus.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = corpus
            .chunks(chunk)
            .enumerate()
            .map(|(k, shard)| scope.spawn(move || work(k * chunk, shard)))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("masking worker panicked"))
            .collect()
    })
}

/// Masks a corpus and writes one JSON record per sentence to `out_path`.
pub fn mask_corpus(
    corpus: &[Sentence],
    lexicon: &SentimentLexicon,
    vocab: &Vocab,
    strategy: MaskingStrategy,
    seed: u64,
    threads: usize,
    out_path: &Path,
) -> Result<MaskingStats> {
    let examples = mask_all(corpus, lexicon, vocab, strategy, seed, threads);
    write_masked(&examples, out_path)?;
    let mut stats = MaskingStats::default();
    for ex in &examples {
        stats.add(ex);
    }
    Ok(stats)
}

pub fn write_masked(examples: &[MaskedExample], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for ex in examples {
        let line = serde_json::to_string(ex).expect("masked example serializes");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_masked(path: &Path) -> Result<Vec<MaskedExample>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: MaskedExample = serde_json::from_str(&line).map_err(|e| Error::format(path, i + 1, e.to_string()))?;
        out.push(ex);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tag_lines;
    use crate::miner::{LexEntry, Polarity};

    fn setup(lines: &[&str], words: &[&str]) -> (Vec<Sentence>, Vocab, SentimentLexicon) {
        let vocab = Vocab::build(lines.iter().copied(), 1, None);
        let corpus = tag_lines(lines.iter().copied(), &vocab, 128);
        let mut lex = SentimentLexicon::default();
        for w in words {
            lex.words.insert(
                w.to_string(),
                LexEntry {
                    polarity: Polarity::Positive,
                    score: 1.0,
                },
            );
        }
        (corpus, vocab, lex)
    }

    #[test]
    fn saturated_corpus_is_all_words() {
        let lines = ["good nice great fine good nice great fine good nice"; 5];
        let (c, v, l) = setup(&lines, &["good", "nice", "great", "fine"]);
        let dir = tempfile::tempdir().unwrap();
        let stats = mask_corpus(
            &c,
            &l,
            &v,
            MaskingStrategy::default(),
            1,
            1,
            &dir.path().join("m.jsonl"),
        )
        .unwrap();
        assert_eq!(stats.word_fraction(), 1.0);
    }

    #[test]
    fn no_hits_is_all_fill() {
        let lines = ["the cat sat on the mat by the door today"; 5];
        let (c, v, l) = setup(&lines, &["good"]);
        let dir = tempfile::tempdir().unwrap();
        let stats = mask_corpus(
            &c,
            &l,
            &v,
            MaskingStrategy::default(),
            1,
            1,
            &dir.path().join("m.jsonl"),
        )
        .unwrap();
        assert_eq!(stats.word_fraction(), 0.0);
        assert_eq!(stats.fill_tokens, 5);
    }

    #[test]
    fn jsonl_round_trip_and_thread_independence() {
        let lines: Vec<String> = (0..30)
            .map(|i| format!("the good item {i} was nice and cheap today ok"))
            .collect();
        let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
        let (c, v, l) = setup(&refs, &["good", "nice"]);
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
        mask_corpus(&c, &l, &v, MaskingStrategy::default(), 9, 1, &a).unwrap();
        mask_corpus(&c, &l, &v, MaskingStrategy::default(), 9, 4, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        let back = read_masked(&a).unwrap();
        assert_eq!(back, mask_all(&c, &l, &v, MaskingStrategy::default(), 9, 1));
    }
}
