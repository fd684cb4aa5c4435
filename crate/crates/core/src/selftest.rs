//! Built-in oracle suite behind `senti selftest`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{tag_lines, tag_word, Pos, Sentence, Vocab};
use crate::encoder::tensor::log_sum_exp;
use crate::encoder::{Checkpoint, EncoderConfig, EncoderParams, Tensor};
use crate::error::Result;
use crate::finetune::Crf;
use crate::gradcheck;
use crate::masker::{derive_seed, mask_budget, mask_sentence, MaskingStrategy};
use crate::miner::{collect_stats, pmi, word_polarity, MinerConfig, Polarity, SeedSet, Smoothing};
use crate::synth;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SelfTestReport {
    pub checks: Vec<CheckResult>,
}

impl SelfTestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut out = String::new();
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            writeln!(out, "{status}  {:width$}  {:>7.2}s  {}", c.name, c.seconds, c.detail).unwrap();
        }
        out
    }
}

fn timed(name: &'static str, f: impl FnOnce() -> (bool, String)) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = f();
    CheckResult {
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Runs every check. A checkpoint path, when given, must load cleanly; a
/// load failure is returned as the error itself.
pub fn run(seed: u64, checkpoint: Option<&Path>) -> Result<SelfTestReport> {
    let mut report = SelfTestReport::default();
    if let Some(path) = checkpoint {
        let start = Instant::now();
        let ckpt = Checkpoint::load(path)?;
        report.checks.push(CheckResult {
            name: "checkpoint loads",
            passed: true,
            detail: format!(
                "{} scalars, {} extra tensors",
                ckpt.params.num_scalars(),
                ckpt.extra.len()
            ),
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    report.checks.push(timed("pmi brute force", || pmi_check(seed)));
    report.checks.push(timed("crf enumeration", || crf_check(seed)));
    report.checks.push(timed("masking budget", || masking_check(seed)));
    report.checks.push(timed("gradient checks", || gradient_check(seed)));
    report.checks.push(timed("checkpoint corruption", corruption_check));
    Ok(report)
}

/// Independent pair counting over every ordered position pair.
fn brute_counts(
    corpus: &[Sentence],
    seeds: &SeedSet,
    window: usize,
) -> (BTreeMap<(String, String), u64>, BTreeMap<String, u64>, u64) {
    let mut joint = BTreeMap::new();
    let mut unigram = BTreeMap::new();
    let mut total = 0;
    for s in corpus {
        for (i, w) in s.surfaces.iter().enumerate() {
            total += 1;
            *unigram.entry(w.clone()).or_default() += 1;
            if !matches!(s.pos_at(i).unwrap_or_else(|| tag_word(w)), Pos::Adj | Pos::Adv) {
                continue;
            }
            for (j, other) in s.surfaces.iter().enumerate() {
                if i != j && i.abs_diff(j) <= window && seeds.contains(other) {
                    *joint.entry((w.clone(), other.clone())).or_default() += 1;
                }
            }
        }
    }
    (joint, unigram, total)
}

fn pmi_check(seed: u64) -> (bool, String) {
    let lines = synth::planted_corpus(100, 3.0, seed).lines;
    let vocab = Vocab::from_tokens(Vec::<String>::new());
    let corpus = tag_lines(lines.iter().map(String::as_str), &vocab, 512);
    let seeds = SeedSet::default_seeds();
    let cfg = MinerConfig::default();
    let smoothing = Smoothing::default();
    let stats = match collect_stats(&corpus, &seeds, cfg.window, true) {
        Ok(s) => s,
        Err(e) => return (false, e.to_string()),
    };
    let (joint, unigram, n) = brute_counts(&corpus, &seeds, cfg.window);
    let n = n as f64;
    let c = |w: &str| unigram.get(w).copied().unwrap_or(0) as f64 + smoothing.unigram;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut wp: BTreeMap<&str, f64> = BTreeMap::new();
    for ((w, s), &count) in &joint {
        let expect = ((count as f64 + smoothing.pair) * n / (c(w) * c(s))).ln();
        let got = pmi(&stats, w, s, smoothing).unwrap_or(f64::NAN);
        worst = worst.max((got - expect).abs() / expect.abs().max(1e-300));
        checked += 1;
        let sign = if seeds.get(s) == Some(Polarity::Positive) {
            1.0
        } else {
            -1.0
        };
        *wp.entry(w).or_default() += sign * expect;
    }
    for (w, expect) in wp {
        let got = word_polarity(&stats, w, &seeds, smoothing)
            .ok()
            .flatten()
            .map_or(f64::NAN, |(s, _)| s);
        worst = worst.max((got - expect).abs() / expect.abs().max(1e-300));
        checked += 1;
    }
    let ok = worst <= 1e-9 && checked > 0;
    (ok, format!("{checked} values, max relative error {worst:.1e}"))
}

fn gradient_check(seed: u64) -> (bool, String) {
    let cases = match (gradcheck::objective_suite(seed), gradcheck::finetune_suite(seed)) {
        (Ok(a), Ok(b)) => a.into_iter().chain(b).collect::<Vec<_>>(),
        (Err(e), _) | (_, Err(e)) => return (false, e.to_string()),
    };
    let failed: Vec<&str> = cases
        .iter()
        .filter(|(_, r)| !r.passed())
        .map(|(n, _)| n.as_str())
        .collect();
    let worst = cases.iter().map(|(_, r)| r.max_rel_error).fold(0.0, f64::max);
    let detail = format!("{} cases, max relative error {worst:.1e}", cases.len());
    if failed.is_empty() {
        (true, detail)
    } else {
        (false, format!("{detail}; failing: {}", failed.join(", ")))
    }
}

fn crf_check(seed: u64) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 7));
    let mut worst: f64 = 0.0;
    let trials = 200;
    for _ in 0..trials {
        let n = rng.random_range(1..=4);
        let k = rng.random_range(1..=5);
        let mut draw =
            |r: usize, c: usize| Tensor::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-2.0..2.0)).collect());
        let e = draw(n, k);
        let crf = Crf {
            trans: draw(k, k),
            start: draw(1, k),
            end: draw(1, k),
        };
        let mut scores = Vec::with_capacity(k.pow(n as u32));
        for code in 0..k.pow(n as u32) {
            let path: Vec<usize> = (0..n).map(|t| code / k.pow(t as u32) % k).collect();
            scores.push(crf.score(&e, &path));
        }
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        worst = worst
            .max((crf.log_partition(&e) - log_sum_exp(&scores)).abs())
            .max((crf.score(&e, &crf.viterbi(&e)) - best).abs());
    }
    (worst <= 1e-8, format!("{trials} instances, max deviation {worst:.1e}"))
}

fn masking_check(seed: u64) -> (bool, String) {
    let bench = synth::benchmark(&synth::BenchmarkConfig {
        corpus_sentences: 400,
        heldout_sentences: 0,
        labeled: 0,
        seed,
        ..Default::default()
    });
    let vocab = Vocab::build(bench.corpus.iter().map(String::as_str), 1, None);
    let corpus = tag_lines(bench.corpus.iter().map(String::as_str), &vocab, 127);
    let lexicon = match crate::miner::mine_lexicon(&corpus, &SeedSet::default_seeds(), &MinerConfig::default()) {
        Ok((l, _)) => l,
        Err(e) => return (false, e.to_string()),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 8));
    let mut examples = 0;
    for (i, s) in corpus.iter().enumerate() {
        let mut s = s.clone();
        s.truncate(rng.random_range(1..=s.len()));
        let ex = mask_sentence(
            &s,
            &lexicon,
            vocab.len(),
            MaskingStrategy::default(),
            derive_seed(seed, i as u64),
        );
        if let Err(e) = ex.check() {
            return (false, format!("sentence {i}: {e}"));
        }
        let free = s.len() - ex.pair_positions().len();
        let want = mask_budget(s.len(), 0.1).min(free);
        if ex.budget_positions() != want {
            return (
                false,
                format!(
                    "sentence {i}: {} budget positions, expected {want}",
                    ex.budget_positions()
                ),
            );
        }
        examples += 1;
    }
    (true, format!("{examples} sentences"))
}

fn corruption_check() -> (bool, String) {
    let cfg = EncoderConfig {
        hidden_dim: 8,
        ffn_dim: 16,
        max_seq_len: 8,
        ..EncoderConfig::toy(10)
    };
    let bytes = Checkpoint::new(EncoderParams::init(cfg, 1)).to_bytes();
    let intact = Checkpoint::from_bytes(&bytes).is_ok();
    let mut flipped = bytes.clone();
    let mid = bytes.len() / 2;
    flipped[mid] ^= 1;
    let caught = [&flipped[..], &bytes[..bytes.len() - 1]]
        .iter()
        .filter(|b| Checkpoint::from_bytes(b).is_err())
        .count();
    (
        intact && caught == 2,
        format!("intact file loads: {intact}; corrupted copies rejected: {caught}/2"),
    )
}
