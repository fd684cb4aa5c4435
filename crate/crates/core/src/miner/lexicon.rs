use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::{tag_word, Pos, Sentence};
use crate::error::{Error, Result};
use crate::miner::seeds::{Polarity, SeedSet};
use crate::miner::stats::{collect_stats_sharded, word_polarity, Smoothing};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LexEntry {
    pub polarity: Polarity,
    pub score: f64,
}

/// Mined sentiment knowledge: polar words and aspect-sentiment pairs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SentimentLexicon {
    pub words: BTreeMap<String, LexEntry>,
    /// (aspect, sentiment) → corpus frequency.
    pub pairs: BTreeMap<(String, String), u64>,
}

impl SentimentLexicon {
    pub fn polarity(&self, word: &str) -> Option<Polarity> {
        self.words.get(word).map(|e| e.polarity)
    }

    pub fn contains_word(&self, word: &str) -> bool {
        self.words.contains_key(word)
    }

    pub fn contains_pair(&self, aspect: &str, sentiment: &str) -> bool {
        self.pairs.contains_key(&(aspect.to_string(), sentiment.to_string()))
    }

    /// Checks the sign rule and that every pair's sentiment word is known.
    pub fn validate(&self) -> Result<()> {
        for (w, e) in &self.words {
            if !e.score.is_finite() || (e.polarity == Polarity::Positive) != (e.score > 0.0) {
                return Err(Error::Contract(format!(
                    "lexicon entry {w:?} has polarity {} but score {}",
                    e.polarity, e.score
                )));
            }
        }
        for (aspect, sentiment) in self.pairs.keys() {
            if !self.words.contains_key(sentiment) {
                return Err(Error::Contract(format!(
                    "pair ({aspect}, {sentiment}) refers to an unknown sentiment word"
                )));
            }
        }
        Ok(())
    }

    pub fn lexicon_tsv(&self) -> String {
        let mut out = String::new();
        for (w, e) in &self.words {
            writeln!(out, "{w}\t{}\t{}", e.polarity, e.score).unwrap();
        }
        out
    }

    pub fn pairs_tsv(&self) -> String {
        let mut out = String::new();
        for ((a, s), f) in &self.pairs {
            writeln!(out, "{a}\t{s}\t{f}").unwrap();
        }
        out
    }

    pub fn save(&self, lexicon_path: &Path, pairs_path: &Path) -> Result<()> {
        fs::write(lexicon_path, self.lexicon_tsv()).map_err(|e| Error::io(lexicon_path, e))?;
        fs::write(pairs_path, self.pairs_tsv()).map_err(|e| Error::io(pairs_path, e))
    }

    pub fn load(lexicon_path: &Path, pairs_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(lexicon_path).map_err(|e| Error::io(lexicon_path, e))?;
        let mut lex = SentimentLexicon::default();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(Error::format(
                    lexicon_path,
                    i + 1,
                    "expected word<TAB>polarity<TAB>score",
                ));
            }
            let polarity = Polarity::parse(f[1])
                .ok_or_else(|| Error::format(lexicon_path, i + 1, format!("bad polarity {:?}", f[1])))?;
            let score: f64 = f[2]
                .parse()
                .map_err(|_| Error::format(lexicon_path, i + 1, format!("bad score {:?}", f[2])))?;
            lex.words.insert(f[0].to_string(), LexEntry { polarity, score });
        }
        let text = fs::read_to_string(pairs_path).map_err(|e| Error::io(pairs_path, e))?;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(Error::format(
                    pairs_path,
                    i + 1,
                    "expected aspect<TAB>sentiment<TAB>freq",
                ));
            }
            let freq: u64 = f[2]
                .parse()
                .map_err(|_| Error::format(pairs_path, i + 1, format!("bad frequency {:?}", f[2])))?;
            lex.pairs.insert((f[0].to_string(), f[1].to_string()), freq);
        }
        lex.validate()?;
        Ok(lex)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinerConfig {
    pub window: usize,
    pub min_cand_freq: u64,
    pub min_pair_freq: u64,
    pub pos_filter: bool,
    pub smoothing: Smoothing,
    /// Maximum aspect↔sentiment token distance.
    pub pair_distance: usize,
    pub threads: usize,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            window: 10,
            min_cand_freq: 5,
            min_pair_freq: 2,
            pos_filter: true,
            smoothing: Smoothing::default(),
            pair_distance: 3,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Exclusion {
    BelowMinFrequency,
    NoSeedCooccurrence,
}

impl Exclusion {
    pub fn code(self) -> &'static str {
        match self {
            Exclusion::BelowMinFrequency => "LOW_FREQ",
            Exclusion::NoSeedCooccurrence => "NO_SEED_COOCCURRENCE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MiningReport {
    pub sentences: usize,
    pub tokens: u64,
    pub seeds: usize,
    pub candidates: usize,
    pub accepted: usize,
    pub excluded: Vec<(String, Exclusion)>,
    pub pairs: usize,
    pub positive: usize,
    pub negative: usize,
}

impl MiningReport {
    pub fn to_text(&self, lexicon: &SentimentLexicon, top_k: usize) -> String {
        let mut out = String::new();
        writeln!(out, "sentences\t{}", self.sentences).unwrap();
        writeln!(out, "tokens\t{}", self.tokens).unwrap();
        writeln!(out, "seeds\t{}", self.seeds).unwrap();
        writeln!(out, "candidates\t{}", self.candidates).unwrap();
        writeln!(out, "accepted\t{}", self.accepted).unwrap();
        writeln!(out, "excluded\t{}", self.excluded.len()).unwrap();
        writeln!(out, "lexicon_positive\t{}", self.positive).unwrap();
        writeln!(out, "lexicon_negative\t{}", self.negative).unwrap();
        writeln!(out, "pairs\t{}", self.pairs).unwrap();
        let mut mined: Vec<(&String, &LexEntry)> = lexicon.words.iter().collect();
        mined.sort_by(|a, b| b.1.score.abs().total_cmp(&a.1.score.abs()).then_with(|| a.0.cmp(b.0)));
        writeln!(out, "\n# top {top_k} by |score|").unwrap();
        for (w, e) in mined.into_iter().take(top_k) {
            writeln!(out, "{w}\t{}\t{}", e.polarity, e.score).unwrap();
        }
        writeln!(out, "\n# excluded candidates").unwrap();
        for (w, reason) in &self.excluded {
            writeln!(out, "{w}\t{}", reason.code()).unwrap();
        }
        out
    }
}

/// Seeds enter the lexicon with this magnitude and their given sign.
pub const SEED_SCORE: f64 = 1.0;

/// Mines polar words by PMI against the seeds, then aspect-sentiment pairs.
pub fn mine_lexicon(
    corpus: &[Sentence],
    seeds: &SeedSet,
    config: &MinerConfig,
) -> Result<(SentimentLexicon, MiningReport)> {
    let stats = collect_stats_sharded(corpus, seeds, config.window, config.pos_filter, config.threads)?;
    let mut lexicon = SentimentLexicon::default();
    let mut report = MiningReport {
        sentences: corpus.len(),
        tokens: stats.total_tokens,
        seeds: seeds.len(),
        ..Default::default()
    };
    for (s, polarity) in seeds.iter() {
        let score = match polarity {
            Polarity::Positive => SEED_SCORE,
            Polarity::Negative => -SEED_SCORE,
        };
        lexicon.words.insert(s.to_string(), LexEntry { polarity, score });
    }
    for (w, &freq) in &stats.candidate {
        if seeds.contains(w) {
            continue;
        }
        report.candidates += 1;
        if freq < config.min_cand_freq {
            report.excluded.push((w.clone(), Exclusion::BelowMinFrequency));
            continue;
        }
        match word_polarity(&stats, w, seeds, config.smoothing)? {
            Some((score, polarity)) => {
                lexicon.words.insert(w.clone(), LexEntry { polarity, score });
                report.accepted += 1;
            }
            None => report.excluded.push((w.clone(), Exclusion::NoSeedCooccurrence)),
        }
    }
    let words: BTreeSet<String> = lexicon.words.keys().cloned().collect();
    lexicon.pairs = mine_pairs(corpus, &words, config.pair_distance, config.min_pair_freq);
    report.pairs = lexicon.pairs.len();
    report.positive = lexicon
        .words
        .values()
        .filter(|e| e.polarity == Polarity::Positive)
        .count();
    report.negative = lexicon.words.len() - report.positive;
    Ok((lexicon, report))
}

/// Position of the nearest NOUN within `max_distance` of `i`, preferring the
/// left side at equal distance. Sentiment words are never aspects.
pub fn nearest_noun(
    sentence: &Sentence,
    i: usize,
    max_distance: usize,
    is_sentiment: impl Fn(&str) -> bool,
) -> Option<usize> {
    let is_noun = |j: usize| {
        let pos = sentence.pos_at(j).unwrap_or_else(|| tag_word(&sentence.surfaces[j]));
        pos == Pos::Noun && !is_sentiment(&sentence.surfaces[j])
    };
    (1..=max_distance).find_map(|d| {
        if i >= d && is_noun(i - d) {
            Some(i - d)
        } else if i + d < sentence.len() && is_noun(i + d) {
            Some(i + d)
        } else {
            None
        }
    })
}

/// Pairs every sentiment-word occurrence with its nearest noun and keeps the
/// pairs seen at least `min_pair_freq` times.
pub fn mine_pairs(
    corpus: &[Sentence],
    sentiment_words: &BTreeSet<String>,
    max_distance: usize,
    min_pair_freq: u64,
) -> BTreeMap<(String, String), u64> {
    let mut counts: BTreeMap<(String, String), u64> = BTreeMap::new();
    for sentence in corpus {
        for (i, w) in sentence.surfaces.iter().enumerate() {
            if !sentiment_words.contains(w) {
                continue;
            }
            if let Some(j) = nearest_noun(sentence, i, max_distance, |s| sentiment_words.contains(s)) {
                *counts.entry((sentence.surfaces[j].clone(), w.clone())).or_default() += 1;
            }
        }
    }
    counts.retain(|_, f| *f >= min_pair_freq);
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tag_lines, Vocab};

    fn corpus(lines: &[&str]) -> Vec<Sentence> {
        tag_lines(lines.iter().copied(), &Vocab::from_tokens(Vec::<String>::new()), 512)
    }

    fn words(list: &[&str]) -> BTreeSet<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn adjacent_pair() {
        let p = mine_pairs(&corpus(&["amazing price"]), &words(&["amazing"]), 3, 1);
        assert_eq!(p.get(&("price".into(), "amazing".into())), Some(&1));
    }

    #[test]
    fn noun_four_tokens_away_is_ignored() {
        let p = mine_pairs(&corpus(&["amazing , , , price"]), &words(&["amazing"]), 3, 1);
        assert!(p.is_empty());
        let p = mine_pairs(&corpus(&["amazing , , price"]), &words(&["amazing"]), 3, 1);
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn tie_prefers_left_noun() {
        let c = corpus(&["battery is amazing the price"]);
        let p = mine_pairs(&c, &words(&["amazing"]), 3, 1);
        assert_eq!(
            p.keys().collect::<Vec<_>>(),
            [&("battery".to_string(), "amazing".to_string())]
        );
    }

    #[test]
    fn min_pair_freq_filters() {
        let c = corpus(&["amazing price", "amazing price", "amazing screen"]);
        let p = mine_pairs(&c, &words(&["amazing"]), 3, 2);
        assert_eq!(p.len(), 1);
        assert!(p.contains_key(&("price".into(), "amazing".into())));
    }

    #[test]
    fn seeds_only_when_no_candidates() {
        let c = corpus(&["great thing", "bad thing"]);
        let seeds = SeedSet::default_seeds();
        let (lex, report) = mine_lexicon(&c, &seeds, &MinerConfig::default()).unwrap();
        assert_eq!(lex.words.len(), 46);
        assert_eq!(report.accepted, 0);
        lex.validate().unwrap();
    }

    #[test]
    fn report_lists_exclusions() {
        let mut lines = vec!["great and superb"; 6];
        lines.push("lonely wonderful thing");
        let c = corpus(&lines);
        let (lex, report) = mine_lexicon(&c, &SeedSet::default_seeds(), &MinerConfig::default()).unwrap();
        assert!(lex.contains_word("superb"));
        assert!(report
            .excluded
            .contains(&("wonderful".to_string(), Exclusion::BelowMinFrequency)));
        let text = report.to_text(&lex, 5);
        assert!(text.contains("wonderful\tLOW_FREQ"));
    }

    #[test]
    fn no_seed_cooccurrence_is_excluded() {
        let mut lines = vec!["superb"; 5];
        lines.push("great");
        let (_, report) = mine_lexicon(&corpus(&lines), &SeedSet::default_seeds(), &MinerConfig::default()).unwrap();
        assert_eq!(report.excluded, [("superb".to_string(), Exclusion::NoSeedCooccurrence)]);
    }

    #[test]
    fn lexicon_files_round_trip() {
        let mut lex = SentimentLexicon::default();
        lex.words.insert(
            "superb".into(),
            LexEntry {
                polarity: Polarity::Positive,
                score: 0.1 + 0.2,
            },
        );
        lex.words.insert(
            "awful".into(),
            LexEntry {
                polarity: Polarity::Negative,
                score: -1.0 / 3.0,
            },
        );
        lex.pairs.insert(("price".into(), "superb".into()), 4);
        let dir = tempfile::tempdir().unwrap();
        let (l, p) = (dir.path().join("lexicon.tsv"), dir.path().join("pairs.tsv"));
        lex.save(&l, &p).unwrap();
        assert_eq!(SentimentLexicon::load(&l, &p).unwrap(), lex);
    }

    #[test]
    fn load_rejects_sign_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (l, p) = (dir.path().join("lexicon.tsv"), dir.path().join("pairs.tsv"));
        fs::write(&l, "x\t+\t-0.5\n").unwrap();
        fs::write(&p, "").unwrap();
        assert!(matches!(SentimentLexicon::load(&l, &p), Err(Error::Contract(_))));
    }
}
