use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Sentence, TokenId, CLS_ID, MASK_ID, NUM_SPECIAL};
use crate::masker::detect::{DetectionResult, TokenClass};
use crate::miner::Polarity;

/// A (position, original id) record. Positions index the corrupted sequence,
/// where position 0 holds `[CLS]`.
pub type Slot = (usize, TokenId);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairTarget {
    pub aspect: Vec<Slot>,
    pub sentiment: Vec<Slot>,
    /// Sorted, de-duplicated ids of the pair: the non-zero entries of its
    /// multi-hot target vector.
    pub token_ids: Vec<TokenId>,
}

impl PairTarget {
    pub fn positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.aspect.iter().chain(&self.sentiment).map(|s| s.0)
    }

    pub fn slots(&self) -> impl Iterator<Item = &Slot> + '_ {
        self.aspect.iter().chain(&self.sentiment)
    }
}

/// Corrupted sequence plus the targets of every objective.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedExample {
    pub corrupted: Vec<TokenId>,
    pub original: Vec<TokenId>,
    /// Sentiment-word and common-fill positions with their original ids.
    pub sw_targets: Vec<Slot>,
    /// Sentiment-word and pair-sentiment positions with their polarity.
    pub wp_targets: Vec<(usize, Polarity)>,
    pub ap_targets: Vec<PairTarget>,
    /// Positions masked as sentiment words (step 2).
    pub word_positions: Vec<usize>,
    /// Positions filled with the 80/10/10 rule (step 3 or random-token masking).
    pub fill_positions: Vec<usize>,
    pub seed: u64,
}

impl MaskedExample {
    pub fn pair_positions(&self) -> BTreeSet<usize> {
        self.ap_targets.iter().flat_map(|p| p.positions()).collect()
    }

    /// Positions counted against the 10% budget.
    pub fn budget_positions(&self) -> usize {
        self.word_positions.len() + self.fill_positions.len()
    }

    /// Puts every recorded original back into the corrupted sequence.
    pub fn reconstruct(&self) -> Vec<TokenId> {
        let mut ids = self.corrupted.clone();
        for &(pos, id) in self
            .sw_targets
            .iter()
            .chain(self.ap_targets.iter().flat_map(|p| p.slots()))
        {
            ids[pos] = id;
        }
        ids
    }

    /// Checks the bookkeeping rules shared by all objectives. Returns a
    /// description of the first violation.
    pub fn check(&self) -> Result<(), String> {
        let n = self.original.len();
        if self.corrupted.len() != n || n == 0 || self.original[0] != CLS_ID || self.corrupted[0] != CLS_ID {
            return Err("sequences must have equal length and start with [CLS]".into());
        }
        if self.ap_targets.len() > 2 {
            return Err(format!("{} pairs masked, at most 2 allowed", self.ap_targets.len()));
        }
        let pairs = self.pair_positions();
        let words: BTreeSet<usize> = self.word_positions.iter().copied().collect();
        let fills: BTreeSet<usize> = self.fill_positions.iter().copied().collect();
        if words.len() != self.word_positions.len() || fills.len() != self.fill_positions.len() {
            return Err("duplicate positions".into());
        }
        if !pairs.is_disjoint(&words) || !pairs.is_disjoint(&fills) || !words.is_disjoint(&fills) {
            return Err("pair, word and fill positions overlap".into());
        }
        if pairs.iter().chain(&words).chain(&fills).any(|&p| p == 0 || p >= n) {
            return Err("position out of range".into());
        }
        let sw: BTreeSet<usize> = self.sw_targets.iter().map(|s| s.0).collect();
        if !sw.is_disjoint(&pairs) {
            return Err("pair position in SW targets".into());
        }
        let expected_sw: BTreeSet<usize> = words.union(&fills).copied().collect();
        if sw != expected_sw {
            return Err("SW targets must be exactly the word and fill positions".into());
        }
        let pair_sentiment: BTreeSet<usize> = self
            .ap_targets
            .iter()
            .flat_map(|p| p.sentiment.iter().map(|s| s.0))
            .collect();
        for &(pos, _) in &self.wp_targets {
            if !(words.contains(&pos) || pair_sentiment.contains(&pos)) {
                return Err(format!(
                    "WP target at {pos} is neither a sentiment word nor a pair sentiment"
                ));
            }
        }
        for &p in pairs.iter().chain(&words) {
            if self.corrupted[p] != MASK_ID {
                return Err(format!("sentiment position {p} is not [MASK]"));
            }
        }
        for target in &self.ap_targets {
            let ids: BTreeSet<TokenId> = target.slots().map(|s| s.1).collect();
            if ids.into_iter().collect::<Vec<_>>() != target.token_ids {
                return Err("pair token_ids do not match its slots".into());
            }
        }
        for (i, (&c, &o)) in self.corrupted.iter().zip(&self.original).enumerate() {
            if c != o && !pairs.contains(&i) && !words.contains(&i) && !fills.contains(&i) {
                return Err(format!("unrecorded change at position {i}"));
            }
        }
        if self.reconstruct() != self.original {
            return Err("reconstruction does not reproduce the original".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskingConfig {
    /// Fraction of tokens masked by the word and fill steps together.
    pub ratio: f64,
    pub max_pairs: usize,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        MaskingConfig {
            ratio: 0.10,
            max_pairs: 2,
        }
    }
}

/// ⌊ratio · n⌋ with a floor of one token for non-empty sentences.
pub fn mask_budget(n: usize, ratio: f64) -> usize {
    if n == 0 {
        return 0;
    }
    ((ratio * n as f64 + 1e-9).floor() as usize).clamp(1, n)
}

/// The 80/10/10 corruption: `[MASK]`, a uniformly random non-special id, or the
/// original id.
pub fn corrupt_token(rng: &mut impl Rng, original: TokenId, vocab_size: usize) -> TokenId {
    let r: f64 = rng.random();
    if r < 0.8 {
        MASK_ID
    } else if r < 0.9 && vocab_size > NUM_SPECIAL {
        rng.random_range(NUM_SPECIAL as TokenId..vocab_size as TokenId)
    } else {
        original
    }
}

fn with_cls(sentence: &Sentence) -> Vec<TokenId> {
    std::iter::once(CLS_ID).chain(sentence.tokens.iter().copied()).collect()
}

pub fn mask(sentence: &Sentence, detection: &DetectionResult, vocab_size: usize, seed: u64) -> MaskedExample {
    mask_with(sentence, detection, vocab_size, MaskingConfig::default(), seed)
}

/// Hybrid sentiment masking: up to `max_pairs` pairs, then whole sentiment
/// words within the budget, then 80/10/10 common-token fill for the rest.
pub fn mask_with(
    sentence: &Sentence,
    detection: &DetectionResult,
    vocab_size: usize,
    config: MaskingConfig,
    seed: u64,
) -> MaskedExample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let original = with_cls(sentence);
    let mut corrupted = original.clone();
    let n = sentence.len();
    let mut masked = vec![false; n];
    let mut ex = MaskedExample {
        corrupted: Vec::new(),
        original: Vec::new(),
        sw_targets: Vec::new(),
        wp_targets: Vec::new(),
        ap_targets: Vec::new(),
        word_positions: Vec::new(),
        fill_positions: Vec::new(),
        seed,
    };

    // Pairs: every token becomes [MASK]; WP only on the sentiment side.
    let chosen_pairs = config.max_pairs.min(detection.pairs.len());
    let mut chosen: Vec<usize> = index::sample(&mut rng, detection.pairs.len(), chosen_pairs).into_vec();
    chosen.sort_unstable();
    for &k in &chosen {
        let pair = &detection.pairs[k];
        let slot = |i: usize| (i + 1, original[i + 1]);
        let aspect: Vec<Slot> = pair.aspect.iter().map(|&i| slot(i)).collect();
        let sentiment: Vec<Slot> = pair.sentiment.iter().map(|&i| slot(i)).collect();
        let mut token_ids: Vec<TokenId> = aspect.iter().chain(&sentiment).map(|s| s.1).collect();
        token_ids.sort_unstable();
        token_ids.dedup();
        for &i in pair.aspect.iter().chain(&pair.sentiment) {
            masked[i] = true;
            corrupted[i + 1] = MASK_ID;
        }
        for &(p, _) in &sentiment {
            ex.wp_targets.push((p, pair.polarity));
        }
        ex.ap_targets.push(PairTarget {
            aspect,
            sentiment,
            token_ids,
        });
    }

    // Whole sentiment words, including those of pairs that were not chosen.
    let budget = mask_budget(n, config.ratio);
    let mut candidates: Vec<(&[usize], Polarity)> = detection
        .words
        .iter()
        .map(|w| (w.positions.as_slice(), w.polarity))
        .chain(
            detection
                .pairs
                .iter()
                .enumerate()
                .filter(|(k, _)| !chosen.contains(k))
                .map(|(_, p)| (p.sentiment.as_slice(), p.polarity)),
        )
        .collect();
    candidates.sort_by_key(|c| c.0[0]);
    candidates.shuffle(&mut rng);
    let mut used = 0;
    for (positions, polarity) in candidates {
        if used + positions.len() > budget {
            continue;
        }
        for &i in positions {
            masked[i] = true;
            corrupted[i + 1] = MASK_ID;
            ex.word_positions.push(i + 1);
            ex.sw_targets.push((i + 1, original[i + 1]));
            ex.wp_targets.push((i + 1, polarity));
        }
        used += positions.len();
    }

    // Common-token fill. Falls back to other unmasked positions only when the
    // sentence has too few common tokens left.
    let remainder = budget - used;
    if remainder > 0 {
        let mut common: Vec<usize> = (0..n)
            .filter(|&i| !masked[i] && detection.classes.get(i) == Some(&TokenClass::Common))
            .collect();
        common.shuffle(&mut rng);
        if common.len() < remainder {
            let mut rest: Vec<usize> = (0..n)
                .filter(|&i| !masked[i] && detection.classes.get(i) != Some(&TokenClass::Common))
                .collect();
            rest.shuffle(&mut rng);
            common.extend(rest);
        }
        for i in common.into_iter().take(remainder) {
            masked[i] = true;
            corrupted[i + 1] = corrupt_token(&mut rng, original[i + 1], vocab_size);
            ex.fill_positions.push(i + 1);
            ex.sw_targets.push((i + 1, original[i + 1]));
        }
    }

    ex.sw_targets.sort_unstable();
    ex.wp_targets.sort_unstable_by_key(|t| t.0);
    ex.word_positions.sort_unstable();
    ex.fill_positions.sort_unstable();
    ex.corrupted = corrupted;
    ex.original = original;
    ex
}

/// Random token masking: ⌊rate · n⌋ (at least one) positions chosen uniformly,
/// each corrupted with the 80/10/10 rule and predicted by the SW head.
pub fn mask_random(sentence: &Sentence, vocab_size: usize, rate: f64, seed: u64) -> MaskedExample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let original = with_cls(sentence);
    let mut corrupted = original.clone();
    let n = sentence.len();
    let k = mask_budget(n, rate);
    let mut picks = index::sample(&mut rng, n, k).into_vec();
    picks.sort_unstable();
    let mut sw_targets = Vec::with_capacity(k);
    for &i in &picks {
        corrupted[i + 1] = corrupt_token(&mut rng, original[i + 1], vocab_size);
        sw_targets.push((i + 1, original[i + 1]));
    }
    MaskedExample {
        corrupted,
        original,
        sw_targets,
        wp_targets: Vec::new(),
        ap_targets: Vec::new(),
        word_positions: Vec::new(),
        fill_positions: picks.into_iter().map(|i| i + 1).collect(),
        seed,
    }
}

/// Multi-hot target over the vocabulary: 1 at every id in the pair.
pub fn build_ap_target(pair_token_ids: &[TokenId], vocab_size: usize) -> Vec<f64> {
    let mut y = vec![0.0; vocab_size];
    for &id in pair_token_ids {
        y[id as usize] = 1.0;
    }
    y
}

/// Per-sentence seed so corpus masking does not depend on worker scheduling.
pub fn derive_seed(global: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the combined value
    let mut z = global
        ^ index
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, Vocab};
    use crate::masker::detect::{detect, PairSpan, WordSpan};
    use crate::miner::{LexEntry, SentimentLexicon};
    use proptest::prelude::*;

    fn vocab_for(text: &str) -> Vocab {
        Vocab::build([text], 1, None)
    }

    fn lex(words: &[&str], pairs: &[(&str, &str)]) -> SentimentLexicon {
        let mut l = SentimentLexicon::default();
        for w in words {
            l.words.insert(
                w.to_string(),
                LexEntry {
                    polarity: Polarity::Positive,
                    score: 1.0,
                },
            );
        }
        for (a, s) in pairs {
            l.pairs.insert((a.to_string(), s.to_string()), 2);
        }
        l
    }

    #[test]
    fn at_most_two_pairs() {
        let text = "good food nice staff great view and a b c d e f g h i j k l m";
        let v = vocab_for(text);
        let s = tokenize(text, &v);
        let l = lex(
            &["good", "nice", "great"],
            &[("food", "good"), ("staff", "nice"), ("view", "great")],
        );
        let d = detect(&s, &l);
        assert_eq!(d.pairs.len(), 3);
        for seed in 0..20 {
            let ex = mask(&s, &d, v.len(), seed);
            assert_eq!(ex.ap_targets.len(), 2);
            ex.check().unwrap();
            // the third pair's sentiment word is still eligible for step 2
            assert_eq!(ex.budget_positions(), 2);
        }
    }

    #[test]
    fn twenty_tokens_one_sentiment_word() {
        let text = "this is a long sentence with one superb word and many other plain tokens around it here and so on";
        let v = vocab_for(text);
        let s = tokenize(text, &v);
        assert_eq!(s.len(), 20);
        let d = detect(&s, &lex(&["superb"], &[]));
        let ex = mask(&s, &d, v.len(), 7);
        assert_eq!(ex.word_positions.len(), 1);
        assert_eq!(ex.fill_positions.len(), 1);
        assert!(ex.wp_targets.iter().all(|t| ex.word_positions.contains(&t.0)));
        ex.check().unwrap();
    }

    #[test]
    fn deterministic_per_seed() {
        let text = "the amazing price made me happy and the staff was nice to us";
        let v = vocab_for(text);
        let s = tokenize(text, &v);
        let d = detect(&s, &lex(&["amazing", "nice", "happy"], &[("price", "amazing")]));
        let a = serde_json::to_string(&mask(&s, &d, v.len(), 99)).unwrap();
        let b = serde_json::to_string(&mask(&s, &d, v.len(), 99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn short_sentence_budget_is_one() {
        assert_eq!(mask_budget(0, 0.1), 0);
        assert_eq!(mask_budget(3, 0.1), 1);
        assert_eq!(mask_budget(10, 0.1), 1);
        assert_eq!(mask_budget(29, 0.1), 2);
        assert_eq!(mask_budget(30, 0.1), 3);
        assert_eq!(mask_budget(70, 0.1), 7);
    }

    #[test]
    fn ap_target_vector() {
        let y = build_ap_target(&[7, 12], 20);
        assert_eq!(y.len(), 20);
        assert_eq!(y.iter().filter(|&&x| x == 1.0).count(), 2);
        assert_eq!((y[7], y[12]), (1.0, 1.0));
        let y = build_ap_target(&[3, 3], 20);
        assert_eq!(y.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn oversized_word_is_skipped_whole() {
        // a two-token "word" cannot fit a budget of one
        let text = "a b c d e f g h i j";
        let v = vocab_for(text);
        let s = tokenize(text, &v);
        let d = DetectionResult {
            pairs: Vec::new(),
            words: vec![WordSpan {
                positions: vec![0, 1],
                polarity: Polarity::Negative,
            }],
            classes: vec![
                TokenClass::Sentiment,
                TokenClass::Sentiment,
                TokenClass::Common,
                TokenClass::Common,
                TokenClass::Common,
                TokenClass::Common,
                TokenClass::Common,
                TokenClass::Common,
                TokenClass::Common,
                TokenClass::Common,
            ],
        };
        let ex = mask(&s, &d, v.len(), 1);
        assert!(ex.word_positions.is_empty());
        assert_eq!(ex.fill_positions.len(), 1);
        assert!(ex.fill_positions[0] > 2);
        ex.check().unwrap();
    }

    #[test]
    fn multi_token_pair_target() {
        let text = "x y z w v u t s r q";
        let v = vocab_for(text);
        let s = tokenize(text, &v);
        let mut classes = vec![TokenClass::Common; 10];
        classes[..3].fill(TokenClass::Pair);
        let d = DetectionResult {
            pairs: vec![PairSpan {
                aspect: vec![0, 1],
                sentiment: vec![2],
                polarity: Polarity::Positive,
            }],
            words: Vec::new(),
            classes,
        };
        let ex = mask(&s, &d, v.len(), 3);
        assert_eq!(ex.ap_targets[0].token_ids.len(), 3);
        assert_eq!(ex.wp_targets, [(3, Polarity::Positive)]);
        ex.check().unwrap();
    }

    #[test]
    fn random_masking_rate() {
        let text: String = (0..40).map(|i| format!("w{i} ")).collect();
        let v = vocab_for(&text);
        let s = tokenize(&text, &v);
        let ex = mask_random(&s, v.len(), 0.15, 5);
        assert_eq!(ex.sw_targets.len(), 6);
        assert!(ex.ap_targets.is_empty() && ex.wp_targets.is_empty());
        ex.check().unwrap();
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: BTreeSet<u64> = (0..1000).map(|i| derive_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_eq!(derive_seed(1, 2), derive_seed(1, 2));
    }

    proptest! {
        #[test]
        fn masking_invariants(words in proptest::collection::vec(0usize..12, 1..60), seed in any::<u64>()) {
            const POOL: [&str; 12] = ["good", "bad", "food", "staff", "nice", "the", "a", "was", "and", "price", "awful", "it"];
            let text: Vec<&str> = words.iter().map(|&i| POOL[i]).collect();
            let text = text.join(" ");
            let v = Vocab::from_tokens(POOL);
            let s = tokenize(&text, &v);
            let mut l = lex(&["good", "nice"], &[("food", "good"), ("staff", "nice"), ("price", "awful")]);
            l.words.insert("bad".into(), LexEntry { polarity: Polarity::Negative, score: -2.0 });
            l.words.insert("awful".into(), LexEntry { polarity: Polarity::Negative, score: -1.0 });
            let d = detect(&s, &l);
            let ex = mask(&s, &d, v.len(), seed);
            prop_assert!(ex.check().is_ok(), "{:?}", ex.check());
            let n = s.len();
            if n >= 10 {
                prop_assert_eq!(ex.budget_positions(), n / 10);
            } else {
                prop_assert!(ex.budget_positions() <= 1);
            }
        }
    }
}
