//! Seeded synthetic corpora with planted sentiment structure.
//!
//! Two worlds are provided. [`planted_corpus`] scatters polar words among the
//! default seeds with a fixed same-polarity skew, which is what lexicon
//! mining should recover. [`benchmark`] builds a small review domain: each
//! aspect noun owns one positive and one negative adjective, context words
//! identify the aspect, and a cue verb states the verdict. Its sentence
//! classification split trains on half of the aspects and evaluates on the
//! other half, so dev accuracy above chance has to come from pre-training.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::tag_word;
use crate::miner::{Polarity, SeedSet};

/// Invented adjectives; the suffixes make the rule tagger read them as ADJ.
pub const POSITIVE_WORDS: [&str; 10] = [
    "brivous", "clendful", "dornive", "fenable", "glimous", "harnful", "jolive", "kemible", "lurous", "mavful",
];
pub const NEGATIVE_WORDS: [&str; 10] = [
    "brakless",
    "cludous",
    "dreggive",
    "fustable",
    "gorbless",
    "hulkive",
    "jarnous",
    "krebful",
    "lotchable",
    "mogless",
];

/// Aspect noun and two words that only occur around it.
pub const ASPECTS: [(&str, [&str; 2]); 10] = [
    ("battery", ["hours", "charger"]),
    ("screen", ["pixels", "glare"]),
    ("keyboard", ["keys", "layout"]),
    ("camera", ["photos", "lens"]),
    ("speaker", ["bass", "volume"]),
    ("price", ["cost", "dollars"]),
    ("service", ["staff", "waiter"]),
    ("food", ["dish", "flavor"]),
    ("room", ["bed", "view"]),
    ("delivery", ["package", "courier"]),
];

const FILLERS: [&str; 12] = [
    "the", "it", "this", "was", "is", "and", "so", "with", "my", "for", "i", "of",
];
const NOUNS: [&str; 8] = [
    "phone", "laptop", "hotel", "store", "order", "product", "week", "friend",
];
const TAILS: [&str; 5] = ["today", "this week", "after a month", "as i expected", "in my opinion"];

fn polar(p: Polarity) -> &'static [&'static str; 10] {
    match p {
        Polarity::Positive => &POSITIVE_WORDS,
        Polarity::Negative => &NEGATIVE_WORDS,
    }
}

fn flip(p: Polarity) -> Polarity {
    match p {
        Polarity::Positive => Polarity::Negative,
        Polarity::Negative => Polarity::Positive,
    }
}

fn cue(p: Polarity) -> &'static str {
    match p {
        Polarity::Positive => "kept",
        Polarity::Negative => "returned",
    }
}

pub fn label(p: Polarity) -> &'static str {
    match p {
        Polarity::Positive => "positive",
        Polarity::Negative => "negative",
    }
}

fn coin(rng: &mut ChaCha8Rng) -> Polarity {
    if rng.random_bool(0.5) {
        Polarity::Positive
    } else {
        Polarity::Negative
    }
}

struct SeedPool {
    positive: Vec<String>,
    negative: Vec<String>,
}

impl SeedPool {
    fn new(seeds: &SeedSet) -> Self {
        let pick = |want: Polarity| {
            seeds
                .iter()
                .filter(|(_, p)| *p == want)
                .map(|(s, _)| s.to_string())
                .collect()
        };
        SeedPool {
            positive: pick(Polarity::Positive),
            negative: pick(Polarity::Negative),
        }
    }

    /// A seed agreeing with `p` with odds `skew` : 1.
    fn draw(&self, rng: &mut ChaCha8Rng, p: Polarity, skew: f64) -> &str {
        let side = if rng.random_bool(skew / (skew + 1.0)) {
            p
        } else {
            flip(p)
        };
        let pool = match side {
            Polarity::Positive => &self.positive,
            Polarity::Negative => &self.negative,
        };
        pool.choose(rng).expect("seed pool is non-empty")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedCorpus {
    pub lines: Vec<String>,
    pub planted: Vec<(String, Polarity)>,
}

/// `n` sentences; roughly two thirds carry one planted word next to a seed
/// that agrees with it at odds `skew` : 1, the rest are seed-only background.
pub fn planted_corpus(n: usize, skew: f64, seed: u64) -> PlantedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds = SeedPool::new(&SeedSet::default_seeds());
    let planted: Vec<(String, Polarity)> = POSITIVE_WORDS
        .iter()
        .map(|w| (w.to_string(), Polarity::Positive))
        .chain(NEGATIVE_WORDS.iter().map(|w| (w.to_string(), Polarity::Negative)))
        .collect();
    let mut lines = Vec::with_capacity(n);
    for _ in 0..n {
        let mut words: Vec<String> = Vec::new();
        let noun = *NOUNS.choose(&mut rng).unwrap();
        if rng.random_bool(2.0 / 3.0) {
            let (w, p) = planted.choose(&mut rng).unwrap();
            let s = seeds.draw(&mut rng, *p, skew);
            words.extend(["the", noun, "was", w, "and", s].map(String::from));
        } else {
            let p = coin(&mut rng);
            let s = seeds.draw(&mut rng, p, 1.0);
            words.extend(["my", noun, "is", s].map(String::from));
        }
        for _ in 0..rng.random_range(2..6) {
            words.push(FILLERS.choose(&mut rng).unwrap().to_string());
        }
        lines.push(words.join(" "));
    }
    PlantedCorpus { lines, planted }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkConfig {
    pub corpus_sentences: usize,
    pub heldout_sentences: usize,
    /// Labeled sentences, split 60/40 into train and dev.
    pub labeled: usize,
    /// Same-polarity odds for seeds placed next to planted words.
    pub skew: f64,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            corpus_sentences: 2000,
            heldout_sentences: 200,
            labeled: 500,
            skew: 10.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    /// Unlabeled pre-training sentences.
    pub corpus: Vec<String>,
    /// More sentences from the same generator, never trained on.
    pub heldout: Vec<String>,
    /// `(label, text)` rows; train uses aspects 0..5, dev aspects 5..10.
    pub train: Vec<(String, String)>,
    pub dev: Vec<(String, String)>,
}

/// Adjective owned by aspect `a` with polarity `p`.
pub fn aspect_word(a: usize, p: Polarity) -> &'static str {
    polar(p)[a]
}

fn review(rng: &mut ChaCha8Rng, seeds: &SeedPool, skew: f64) -> String {
    let a = rng.random_range(0..ASPECTS.len());
    let p = coin(rng);
    let (noun, ctx) = ASPECTS[a];
    let adj = aspect_word(a, p);
    let words: Vec<&str> = match rng.random_range(0..10) {
        0..=4 => vec![
            "the",
            noun,
            "was",
            adj,
            ",",
            "so",
            "with",
            "the",
            ctx[0],
            "and",
            ctx[1],
            "i",
            cue(p),
            "it",
        ],
        5..=7 => {
            let s = seeds.draw(rng, p, skew);
            vec!["i", cue(p), "it", "because", "it", "is", adj, "and", s, "to", "me"]
        }
        _ => {
            let other = aspect_word(rng.random_range(0..ASPECTS.len()), p);
            let s = seeds.draw(rng, p, skew);
            vec![
                "so",
                adj,
                "and",
                s,
                ",",
                "also",
                other,
                ",",
                "i",
                cue(p),
                "it",
                "for",
                "me",
            ]
        }
    };
    words.join(" ")
}

fn labeled(rng: &mut ChaCha8Rng, aspects: std::ops::Range<usize>) -> (String, String) {
    let a = rng.random_range(aspects);
    let p = coin(rng);
    let text = format!(
        "the {} was {} {}",
        ASPECTS[a].0,
        aspect_word(a, p),
        TAILS.choose(rng).unwrap()
    );
    (label(p).to_string(), text)
}

pub fn benchmark(config: &BenchmarkConfig) -> Benchmark {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let seeds = SeedPool::new(&SeedSet::default_seeds());
    let corpus = (0..config.corpus_sentences)
        .map(|_| review(&mut rng, &seeds, config.skew))
        .collect();
    let heldout = (0..config.heldout_sentences)
        .map(|_| review(&mut rng, &seeds, config.skew))
        .collect();
    let n_train = config.labeled * 3 / 5;
    let half = ASPECTS.len() / 2;
    let train = (0..n_train).map(|_| labeled(&mut rng, 0..half)).collect();
    let dev = (n_train..config.labeled)
        .map(|_| labeled(&mut rng, half..ASPECTS.len()))
        .collect();
    Benchmark {
        corpus,
        heldout,
        train,
        dev,
    }
}

/// `label<TAB>text` lines.
pub fn classification_tsv(rows: &[(String, String)]) -> String {
    rows.iter().map(|(l, t)| format!("{l}\t{t}\n")).collect()
}

/// Aspect-level rows `label<TAB>aspect<TAB>text`: two aspects per sentence
/// with independent verdicts, so the label depends on which one is asked.
pub fn aspect_tsv(n: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for _ in 0..n {
        let mut picks: Vec<usize> = (0..ASPECTS.len()).collect();
        picks.shuffle(&mut rng);
        let (a, b) = (picks[0], picks[1]);
        let (pa, pb) = (coin(&mut rng), coin(&mut rng));
        let text = format!(
            "the {} was {} but the {} was {}",
            ASPECTS[a].0,
            aspect_word(a, pa),
            ASPECTS[b].0,
            aspect_word(b, pb)
        );
        let (asked, p) = if rng.random_bool(0.5) { (a, pa) } else { (b, pb) };
        out.push_str(&format!("{}\t{}\t{}\n", label(p), ASPECTS[asked].0, text));
    }
    out
}

/// CoNLL rows (token, POS, tag) marking holders (`H`), expressions (`E`)
/// and targets (`T`); every five sentences share a document id.
pub fn tagging_conll(n: usize, seed: u64) -> String {
    const HOLDERS: [&str; 4] = ["i", "we", "my friend", "the reviewer"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for k in 0..n {
        if k % 5 == 0 {
            out.push_str(&format!("# doc = d{}\n", k / 5));
        }
        let a = rng.random_range(0..ASPECTS.len());
        let p = coin(&mut rng);
        let holder: Vec<&str> = HOLDERS.choose(&mut rng).unwrap().split(' ').collect();
        let mut rows: Vec<(&str, String)> = Vec::new();
        push_span(&mut rows, &holder, "H");
        rows.push(("found", "O".into()));
        push_span(&mut rows, &["the", ASPECTS[a].0], "T");
        push_span(&mut rows, &[aspect_word(a, p)], "E");
        if rng.random_bool(0.5) {
            rows.push(("and", "O".into()));
            push_span(&mut rows, &[cue(p), "it"], "O");
        }
        for (w, t) in rows {
            out.push_str(&format!("{w}\t{}\t{t}\n", tag_word(w).as_str()));
        }
        out.push('\n');
    }
    out
}

fn push_span<'a>(rows: &mut Vec<(&'a str, String)>, words: &[&'a str], role: &str) {
    for (i, w) in words.iter().enumerate() {
        let tag = match (role, words.len(), i) {
            ("O", _, _) => "O".to_string(),
            (r, 1, _) => format!("S-{r}"),
            (r, _, 0) => format!("B-{r}"),
            (r, _, _) => format!("I-{r}"),
        };
        rows.push((w, tag));
    }
}
