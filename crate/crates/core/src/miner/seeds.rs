use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_SEEDS: &str = include_str!("../../data/seeds.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
}

impl Polarity {
    /// Class index used by the polarity head: 0 = negative, 1 = positive.
    pub fn class(self) -> usize {
        match self {
            Polarity::Negative => 0,
            Polarity::Positive => 1,
        }
    }

    pub fn opposite(self) -> Polarity {
        match self {
            Polarity::Negative => Polarity::Positive,
            Polarity::Positive => Polarity::Negative,
        }
    }

    pub fn from_score(score: f64) -> Polarity {
        if score > 0.0 {
            Polarity::Positive
        } else {
            Polarity::Negative
        }
    }

    pub fn parse(s: &str) -> Option<Polarity> {
        match s.trim() {
            "+" | "POS" | "pos" | "positive" => Some(Polarity::Positive),
            "-" | "−" | "NEG" | "neg" | "negative" => Some(Polarity::Negative),
            _ => None,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Polarity::Positive => "+",
            Polarity::Negative => "-",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Seed words with human-given polarity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedSet {
    entries: BTreeMap<String, Polarity>,
}

impl SeedSet {
    pub fn new(entries: impl IntoIterator<Item = (String, Polarity)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (word, polarity) in entries {
            if word.is_empty() || word.chars().any(char::is_uppercase) {
                return Err(Error::Config(format!(
                    "seed {word:?} must be a non-empty lowercase word"
                )));
            }
            if let Some(previous) = map.insert(word.clone(), polarity) {
                if previous != polarity {
                    return Err(Error::Config(format!("seed {word:?} is listed with both polarities")));
                }
            }
        }
        if map.is_empty() {
            return Err(Error::Config("seed set is empty".into()));
        }
        Ok(SeedSet { entries: map })
    }

    /// The shipped 46-word list (25 positive, 21 negative).
    pub fn default_seeds() -> Self {
        Self::parse(DEFAULT_SEEDS, Path::new("<builtin seeds>")).expect("builtin seed list is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, pol) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(path, i + 1, "expected word<TAB>polarity"))?;
            let pol =
                Polarity::parse(pol).ok_or_else(|| Error::format(path, i + 1, format!("unknown polarity {pol:?}")))?;
            entries.push((word.trim().to_lowercase(), pol));
        }
        Self::new(entries)
    }

    pub fn get(&self, word: &str) -> Option<Polarity> {
        self.entries.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Polarity)> {
        self.entries.iter().map(|(w, p)| (w.as_str(), *p))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_list_has_46_words() {
        let seeds = SeedSet::default_seeds();
        assert_eq!(seeds.len(), 46);
        let positive = seeds.iter().filter(|(_, p)| *p == Polarity::Positive).count();
        assert_eq!(positive, 25);
        assert_eq!(seeds.get("great"), Some(Polarity::Positive));
        assert_eq!(seeds.get("cheap"), Some(Polarity::Negative));
        assert_eq!(seeds.get("need"), None);
    }

    #[test]
    fn rejects_bad_sets() {
        assert!(SeedSet::new(Vec::new()).is_err());
        assert!(SeedSet::new(vec![("Good".into(), Polarity::Positive)]).is_err());
        assert!(SeedSet::new(vec![
            ("good".into(), Polarity::Positive),
            ("good".into(), Polarity::Negative)
        ])
        .is_err());
    }

    #[test]
    fn accepts_unicode_minus() {
        let s = SeedSet::parse("bad\t−\ngood\t+\n", Path::new("x")).unwrap();
        assert_eq!(s.get("bad"), Some(Polarity::Negative));
    }
}
