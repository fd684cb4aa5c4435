use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::miner::{Polarity, SentimentLexicon};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenClass {
    Pair,
    Sentiment,
    Common,
}

/// A detected aspect-sentiment pair. Positions index the sentence (no `[CLS]`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSpan {
    pub aspect: Vec<usize>,
    pub sentiment: Vec<usize>,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordSpan {
    pub positions: Vec<usize>,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DetectionResult {
    pub pairs: Vec<PairSpan>,
    /// Sentiment words that are not part of a detected pair.
    pub words: Vec<WordSpan>,
    pub classes: Vec<TokenClass>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectOptions {
    pub detect_pairs: bool,
    pub max_distance: usize,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions {
            detect_pairs: true,
            max_distance: 3,
        }
    }
}

pub fn detect(sentence: &Sentence, lexicon: &SentimentLexicon) -> DetectionResult {
    detect_with(sentence, lexicon, DetectOptions::default())
}

/// Greedy left-to-right matching against the lexicon. A sentiment word pairs
/// with the closest unconsumed token within `max_distance` whose
/// (token, word) pair is known, left side first at equal distance.
pub fn detect_with(sentence: &Sentence, lexicon: &SentimentLexicon, options: DetectOptions) -> DetectionResult {
    let n = sentence.len();
    let surfaces = &sentence.surfaces;
    let mut result = DetectionResult {
        classes: vec![TokenClass::Common; n],
        ..Default::default()
    };
    let mut consumed = vec![false; n];
    for i in 0..n {
        if consumed[i] {
            continue;
        }
        let Some(polarity) = lexicon.polarity(&surfaces[i]) else {
            continue;
        };
        let aspect = if options.detect_pairs {
            (1..=options.max_distance).find_map(|d| {
                let matches = |j: usize| !consumed[j] && j != i && lexicon.contains_pair(&surfaces[j], &surfaces[i]);
                if i >= d && matches(i - d) {
                    Some(i - d)
                } else if i + d < n && matches(i + d) {
                    Some(i + d)
                } else {
                    None
                }
            })
        } else {
            None
        };
        consumed[i] = true;
        match aspect {
            Some(j) => {
                consumed[j] = true;
                result.classes[i] = TokenClass::Pair;
                result.classes[j] = TokenClass::Pair;
                result.pairs.push(PairSpan {
                    aspect: vec![j],
                    sentiment: vec![i],
                    polarity,
                });
            }
            None => {
                result.classes[i] = TokenClass::Sentiment;
                result.words.push(WordSpan {
                    positions: vec![i],
                    polarity,
                });
            }
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, Vocab};
    use crate::miner::LexEntry;

    fn lexicon(words: &[(&str, Polarity)], pairs: &[(&str, &str)]) -> SentimentLexicon {
        let mut lex = SentimentLexicon::default();
        for (w, p) in words {
            let score = if *p == Polarity::Positive { 1.0 } else { -1.0 };
            lex.words.insert(w.to_string(), LexEntry { polarity: *p, score });
        }
        for (a, s) in pairs {
            lex.pairs.insert((a.to_string(), s.to_string()), 2);
        }
        lex
    }

    fn sentence(text: &str) -> Sentence {
        tokenize(text, &Vocab::from_tokens(Vec::<String>::new()))
    }

    #[test]
    fn exact_pair_match() {
        let lex = lexicon(&[("amazing", Polarity::Positive)], &[("price", "amazing")]);
        let d = detect(&sentence("amazing price from amazon"), &lex);
        assert_eq!(d.pairs.len(), 1);
        assert_eq!(d.pairs[0].sentiment, [0]);
        assert_eq!(d.pairs[0].aspect, [1]);
        assert_eq!(d.classes[..2], [TokenClass::Pair, TokenClass::Pair]);
        assert!(d.words.is_empty());
    }

    #[test]
    fn unknown_pair_leaves_sentiment_word() {
        let lex = lexicon(&[("good", Polarity::Positive)], &[("battery", "good")]);
        let d = detect(&sentence("the screen is good"), &lex);
        assert!(d.pairs.is_empty());
        assert_eq!(d.words[0].positions, [3]);
        assert_eq!(d.classes[1], TokenClass::Common);
    }

    #[test]
    fn no_hits_all_common() {
        let lex = lexicon(&[("good", Polarity::Positive)], &[]);
        let d = detect(&sentence("nothing to see here"), &lex);
        assert!(d.classes.iter().all(|c| *c == TokenClass::Common));
    }

    #[test]
    fn pair_distance_limit_and_disable() {
        let lex = lexicon(&[("good", Polarity::Positive)], &[("food", "good")]);
        assert!(detect(&sentence("food a b c good"), &lex).pairs.is_empty());
        assert_eq!(detect(&sentence("food a b good"), &lex).pairs.len(), 1);
        let opts = DetectOptions {
            detect_pairs: false,
            ..Default::default()
        };
        let d = detect_with(&sentence("food a b good"), &lex, opts);
        assert!(d.pairs.is_empty());
        assert_eq!(d.words.len(), 1);
    }

    #[test]
    fn aspect_used_once() {
        let lex = lexicon(
            &[("good", Polarity::Positive), ("cheap", Polarity::Negative)],
            &[("food", "good"), ("food", "cheap")],
        );
        let d = detect(&sentence("good food cheap"), &lex);
        assert_eq!(d.pairs.len(), 1);
        assert_eq!(d.words.len(), 1);
        assert_eq!(d.words[0].positions, [2]);
    }
}
