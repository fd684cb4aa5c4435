use std::collections::BTreeMap;

use crate::corpus::{tag_word, Pos, Sentence};
use crate::error::{Error, Result};
use crate::miner::seeds::{Polarity, SeedSet};

/// Additive smoothing applied to raw counts before forming probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothing {
    pub pair: f64,
    pub unigram: f64,
}

impl Smoothing {
    pub const NONE: Smoothing = Smoothing {
        pair: 0.0,
        unigram: 0.0,
    };
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing {
            pair: 0.5,
            unigram: 1.0,
        }
    }
}

/// Co-occurrence counts between candidate words and seed words.
///
/// All fields are plain sums over sentences, so statistics over disjoint
/// shards combine with [`merge`](Self::merge).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CooccurrenceStats {
    /// c(w) over every token.
    pub unigram: BTreeMap<String, u64>,
    /// Occurrences of w that pass the candidate POS filter.
    pub candidate: BTreeMap<String, u64>,
    /// c(w, s): candidate `w` seen within the window of seed `s`.
    pub pair: BTreeMap<(String, String), u64>,
    /// N: total token count.
    pub total_tokens: u64,
    /// N_p: total number of (candidate, seed) observations.
    pub total_pairs: u64,
}

impl CooccurrenceStats {
    pub fn merge(&mut self, other: &CooccurrenceStats) {
        for (w, c) in &other.unigram {
            *self.unigram.entry(w.clone()).or_default() += c;
        }
        for (w, c) in &other.candidate {
            *self.candidate.entry(w.clone()).or_default() += c;
        }
        for (k, c) in &other.pair {
            *self.pair.entry(k.clone()).or_default() += c;
        }
        self.total_tokens += other.total_tokens;
        self.total_pairs += other.total_pairs;
    }

    pub fn count(&self, w: &str) -> u64 {
        self.unigram.get(w).copied().unwrap_or(0)
    }

    pub fn pair_count(&self, w: &str, s: &str) -> u64 {
        self.pair.get(&(w.to_string(), s.to_string())).copied().unwrap_or(0)
    }
}

pub(crate) fn is_candidate_pos(pos: Pos) -> bool {
    matches!(pos, Pos::Adj | Pos::Adv)
}

/// Counts every (candidate, seed) co-occurrence within `window` tokens of the
/// same sentence. With `pos_filter`, candidates are restricted to ADJ/ADV.
pub fn collect_stats(
    corpus: &[Sentence],
    seeds: &SeedSet,
    window: usize,
    pos_filter: bool,
) -> Result<CooccurrenceStats> {
    if seeds.is_empty() {
        return Err(Error::Config("seed set is empty".into()));
    }
    if window == 0 {
        return Err(Error::Config("co-occurrence window must be at least 1".into()));
    }
    let mut stats = CooccurrenceStats::default();
    for sentence in corpus {
        let eligible: Vec<bool> = (0..sentence.len())
            .map(|i| {
                !pos_filter || is_candidate_pos(sentence.pos_at(i).unwrap_or_else(|| tag_word(&sentence.surfaces[i])))
            })
            .collect();
        for (i, w) in sentence.surfaces.iter().enumerate() {
            stats.total_tokens += 1;
            *stats.unigram.entry(w.clone()).or_default() += 1;
            if eligible[i] {
                *stats.candidate.entry(w.clone()).or_default() += 1;
            }
        }
        for (i, s) in sentence.surfaces.iter().enumerate() {
            if !seeds.contains(s) {
                continue;
            }
            let lo = i.saturating_sub(window);
            let hi = (i + window).min(sentence.len() - 1);
            for j in lo..=hi {
                if j == i || !eligible[j] {
                    continue;
                }
                *stats.pair.entry((sentence.surfaces[j].clone(), s.clone())).or_default() += 1;
                stats.total_pairs += 1;
            }
        }
    }
    Ok(stats)
}

/// Shards the corpus over `threads` workers and merges the partial counts in
/// shard order.
pub fn collect_stats_sharded(
    corpus: &[Sentence],
    seeds: &SeedSet,
    window: usize,
    pos_filter: bool,
    threads: usize,
) -> Result<CooccurrenceStats> {
    let threads = threads.max(1);
    if threads == 1 || corpus.len() < 2 * threads {
        return collect_stats(corpus, seeds, window, pos_filter);
    }
    let chunk = corpus.len().div_ceil(threads);
    let partials: Vec<Result<CooccurrenceStats>> = std::thread::scope(|scope| {
        let handles: Vec<_> = corpus
            .chunks(chunk)
            .map(|shard| scope.spawn(move || collect_stats(shard, seeds, window, pos_filter)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("stats worker panicked"))
            .collect()
    });
    let mut total = CooccurrenceStats::default();
    for part in partials {
        total.merge(&part?);
    }
    Ok(total)
}

/// ln [ p(w,s) / (p(w) p(s)) ] with p(w,s) = c(w,s)/N and p(w) = c(w)/N after
/// smoothing the counts.
pub fn pmi(stats: &CooccurrenceStats, w: &str, s: &str, smoothing: Smoothing) -> Result<f64> {
    let joint = stats.pair_count(w, s) as f64 + smoothing.pair;
    let cw = stats.count(w) as f64 + smoothing.unigram;
    let cs = stats.count(s) as f64 + smoothing.unigram;
    let n = stats.total_tokens as f64;
    if joint <= 0.0 || cw <= 0.0 || cs <= 0.0 || n <= 0.0 {
        return Err(Error::UndefinedPmi {
            word: w.to_string(),
            seed: s.to_string(),
        });
    }
    Ok((joint * n / (cw * cs)).ln())
}

/// WP(w) = Σ_{s positive} PMI(w,s) − Σ_{s negative} PMI(w,s), over the seeds
/// that actually co-occur with `w`. Returns `None` when `w` never co-occurs
/// with any seed. A score of exactly zero is negative.
pub fn word_polarity(
    stats: &CooccurrenceStats,
    w: &str,
    seeds: &SeedSet,
    smoothing: Smoothing,
) -> Result<Option<(f64, Polarity)>> {
    let mut positive = 0.0;
    let mut negative = 0.0;
    let mut observed = false;
    for (s, polarity) in seeds.iter() {
        if stats.pair_count(w, s) == 0 {
            continue;
        }
        observed = true;
        let value = pmi(stats, w, s, smoothing)?;
        match polarity {
            Polarity::Positive => positive += value,
            Polarity::Negative => negative += value,
        }
    }
    if !observed {
        return Ok(None);
    }
    let score = positive - negative;
    Ok(Some((score, Polarity::from_score(score))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tag_lines, Vocab};

    fn corpus(lines: &[&str]) -> Vec<Sentence> {
        tag_lines(lines.iter().copied(), &Vocab::from_tokens(Vec::<String>::new()), 512)
    }

    fn seeds(list: &[(&str, Polarity)]) -> SeedSet {
        SeedSet::new(list.iter().map(|(w, p)| (w.to_string(), *p))).unwrap()
    }

    #[test]
    fn window_counts() {
        let c = corpus(&["good fast car"]);
        let s = seeds(&[("good", Polarity::Positive)]);
        let st = collect_stats(&c, &s, 2, false).unwrap();
        assert_eq!(st.pair_count("fast", "good"), 1);
        assert_eq!(st.pair_count("car", "good"), 1);
        let st = collect_stats(&c, &s, 2, true).unwrap();
        assert_eq!(st.pair_count("fast", "good"), 1);
        assert_eq!(st.pair_count("car", "good"), 0);
        let st = collect_stats(&c, &s, 1, false).unwrap();
        assert_eq!(st.pair_count("car", "good"), 0);
    }

    #[test]
    fn duplication_doubles_counts() {
        let lines = [
            "the food was good and fresh",
            "bad service , slow and rude",
            "good price",
        ];
        let doubled: Vec<&str> = lines.iter().flat_map(|l| [*l, *l]).collect();
        let s = SeedSet::default_seeds();
        let a = collect_stats(&corpus(&lines), &s, 10, true).unwrap();
        let b = collect_stats(&corpus(&doubled), &s, 10, true).unwrap();
        assert_eq!(b.total_tokens, 2 * a.total_tokens);
        assert_eq!(b.total_pairs, 2 * a.total_pairs);
        for (k, c) in &a.pair {
            assert_eq!(b.pair[k], 2 * c);
        }
    }

    #[test]
    fn config_errors() {
        let c = corpus(&["a"]);
        let s = seeds(&[("good", Polarity::Positive)]);
        assert!(matches!(collect_stats(&c, &s, 0, false), Err(Error::Config(_))));
    }

    #[test]
    fn pmi_independence_is_zero() {
        // c(w)=2, c(s)=4, N=8, c(w,s)=1: p(w,s)=1/8 = (2/8)(4/8).
        let c = corpus(&["w s", "s s", "s x", "w y"]);
        let s = seeds(&[("s", Polarity::Positive)]);
        let st = collect_stats(&c, &s, 1, false).unwrap();
        assert_eq!(st.pair_count("w", "s"), 1);
        assert!(pmi(&st, "w", "s", Smoothing::NONE).unwrap().abs() < 1e-12);
    }

    #[test]
    fn pmi_when_word_always_adjacent_to_seed() {
        let c = corpus(&["w s a b", "c d e s", "w s f g"]);
        let s = seeds(&[("s", Polarity::Positive)]);
        let st = collect_stats(&c, &s, 1, false).unwrap();
        // p(s) = 3 / 12, and every w sits next to exactly one s.
        let expected = (12.0f64 / 3.0).ln();
        assert!((pmi(&st, "w", "s", Smoothing::NONE).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn undefined_pmi_without_smoothing() {
        let c = corpus(&["w a", "s b"]);
        let s = seeds(&[("s", Polarity::Positive)]);
        let st = collect_stats(&c, &s, 1, false).unwrap();
        assert!(matches!(
            pmi(&st, "w", "s", Smoothing::NONE),
            Err(Error::UndefinedPmi { .. })
        ));
        assert!(pmi(&st, "w", "s", Smoothing::default()).is_ok());
    }

    #[test]
    fn polarity_sign_rule() {
        let c = corpus(&["nice good", "nice good", "ugly bad"]);
        let s = seeds(&[("good", Polarity::Positive), ("bad", Polarity::Negative)]);
        let st = collect_stats(&c, &s, 2, false).unwrap();
        let (score, pol) = word_polarity(&st, "nice", &s, Smoothing::NONE).unwrap().unwrap();
        assert!(score > 0.0);
        assert_eq!(pol, Polarity::Positive);
        assert_eq!(
            word_polarity(&st, "ugly", &s, Smoothing::NONE).unwrap().unwrap().1,
            Polarity::Negative
        );
        assert_eq!(word_polarity(&st, "absent", &s, Smoothing::NONE).unwrap(), None);
    }

    #[test]
    fn zero_score_is_negative() {
        // "mid" co-occurs once with each seed, and both seeds have equal counts.
        let c = corpus(&["good mid bad"]);
        let s = seeds(&[("good", Polarity::Positive), ("bad", Polarity::Negative)]);
        let st = collect_stats(&c, &s, 1, false).unwrap();
        let (score, pol) = word_polarity(&st, "mid", &s, Smoothing::NONE).unwrap().unwrap();
        assert_eq!(score, 0.0);
        assert_eq!(pol, Polarity::Negative);
    }

    #[test]
    fn sharded_matches_serial() {
        let lines: Vec<String> = (0..40)
            .map(|i| format!("good item {i} is fast but bad slow thing"))
            .collect();
        let c = corpus(&lines.iter().map(String::as_str).collect::<Vec<_>>());
        let s = SeedSet::default_seeds();
        let serial = collect_stats(&c, &s, 3, true).unwrap();
        let sharded = collect_stats_sharded(&c, &s, 3, true, 4).unwrap();
        assert_eq!(serial, sharded);
    }
}
