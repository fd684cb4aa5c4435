//! Central finite-difference checks of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CLS_ID, MASK_ID, SEP_ID};
use crate::encoder::{ApInput, EncoderConfig, EncoderParams, Mode, Tensor};
use crate::error::Result;
use crate::finetune::{Encoded, FineTuneModel, TagSet, Target, Task};
use crate::masker::{MaskedExample, PairTarget};
use crate::miner::Polarity;
use crate::objectives::{accumulate, evaluate, ApLoss, Objectives, PairObjective};

/// A collection of named tensors that can be perturbed one scalar at a time.
pub trait ParamSet: Clone {
    fn named(&self) -> Vec<(String, &Tensor)>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;
}

impl ParamSet for EncoderParams {
    fn named(&self) -> Vec<(String, &Tensor)> {
        self.named_tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        EncoderParams::tensors_mut(self)
    }
}

/// Default step and pass threshold.
pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared absolutely.
pub const ABS_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `tensor[index]` with the largest error.
    pub worst: String,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= TOLERANCE
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        self.checked += other.checked;
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
    }
}

impl Default for GradCheckReport {
    fn default() -> Self {
        GradCheckReport {
            checked: 0,
            max_rel_error: 0.0,
            worst: String::new(),
        }
    }
}

/// `|a - b| / max(|a|, |b|, ABS_FLOOR)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(ABS_FLOOR)
}

/// Compares `analytic` with central differences of `loss` around `params`.
///
/// In every tensor the entry with the largest analytic gradient is checked,
/// plus up to `per_tensor - 1` entries drawn with `seed`. Tensors whose name
/// starts with one of `skip` are ignored.
pub fn check<P: ParamSet>(
    params: &P,
    analytic: &P,
    loss: impl Fn(&P) -> f64,
    per_tensor: usize,
    seed: u64,
    skip: &[&str],
) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<(String, usize)> = params.named().into_iter().map(|(n, t)| (n, t.len())).collect();
    let grads = analytic.named();
    let mut report = GradCheckReport::default();
    let mut probe = params.clone();
    for (ti, (name, len)) in names.iter().enumerate() {
        if *len == 0 || skip.iter().any(|s| name.starts_with(s)) {
            continue;
        }
        let g = grads[ti].1.data();
        let largest = (0..*len)
            .max_by(|&a, &b| g[a].abs().total_cmp(&g[b].abs()))
            .unwrap_or(0);
        let mut picks = vec![largest];
        for _ in 1..per_tensor.min(*len) {
            picks.push(rng.random_range(0..*len));
        }
        for idx in picks {
            let original = probe.tensors_mut()[ti].data()[idx];
            probe.tensors_mut()[ti].data_mut()[idx] = original + STEP;
            let up = loss(&probe);
            probe.tensors_mut()[ti].data_mut()[idx] = original - STEP;
            let down = loss(&probe);
            probe.tensors_mut()[ti].data_mut()[idx] = original;
            let fd = (up - down) / (2.0 * STEP);
            let err = relative_error(fd, g[idx]);
            report.checked += 1;
            if report.worst.is_empty() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = format!("{name}[{idx}] fd={fd:.9e} analytic={:.9e}", g[idx]);
            }
        }
    }
    report
}

/// Small encoder used by the built-in checks: 2 layers, 16 hidden units.
pub fn small_config(vocab_size: usize, ap_input: ApInput, tie_output: bool) -> EncoderConfig {
    EncoderConfig {
        n_layers: 2,
        hidden_dim: 16,
        n_heads: 2,
        ffn_dim: 32,
        max_seq_len: 16,
        vocab_size,
        dropout_rate: 0.0,
        init_std: 0.3,
        tie_output,
        ap_input,
    }
}

/// A 6-token masked sequence exercising every target kind: one common fill,
/// one sentiment word and one aspect-sentiment pair.
pub fn sample_example() -> MaskedExample {
    MaskedExample {
        corrupted: vec![CLS_ID, 9, MASK_ID, 17, MASK_ID, MASK_ID],
        original: vec![CLS_ID, 9, 12, 11, 14, 15],
        sw_targets: vec![(2, 12), (3, 11)],
        wp_targets: vec![(2, Polarity::Positive), (5, Polarity::Negative)],
        ap_targets: vec![PairTarget {
            aspect: vec![(4, 14)],
            sentiment: vec![(5, 15)],
            token_ids: vec![14, 15],
        }],
        word_positions: vec![2],
        fill_positions: vec![3],
        seed: 0,
    }
}

/// Checks one objective configuration end to end (heads and encoder).
pub fn check_objectives(
    config: EncoderConfig,
    example: &MaskedExample,
    objectives: Objectives,
    seed: u64,
) -> Result<GradCheckReport> {
    let params = EncoderParams::init(config, seed);
    let mut grads = params.zeros_like();
    accumulate(&params, example, objectives, Mode::Eval, 1.0, &mut grads)?;
    let loss = |p: &EncoderParams| evaluate(p, example, objectives).map(|l| l.total).unwrap_or(f64::NAN);
    Ok(check(&params, &grads, loss, 4, seed, &[]))
}

/// Every pre-training loss variant, named.
pub fn objective_suite(seed: u64) -> Result<Vec<(String, GradCheckReport)>> {
    let ex = sample_example();
    let only = |ap| Objectives {
        sw: false,
        wp: false,
        ap: Some(ap),
    };
    let cases = [
        ("L_sw", small_config(20, ApInput::SentVector, false), Objectives::SW),
        ("L_sw tied", small_config(20, ApInput::SentVector, true), Objectives::SW),
        (
            "L_wp",
            small_config(20, ApInput::SentVector, false),
            Objectives {
                sw: false,
                wp: true,
                ap: None,
            },
        ),
        (
            "L_ap sent/full",
            small_config(20, ApInput::SentVector, false),
            only(PairObjective::MultiLabel(ApLoss::Full)),
        ),
        (
            "L_ap sent/positive",
            small_config(20, ApInput::SentVector, false),
            only(PairObjective::MultiLabel(ApLoss::PositiveOnly)),
        ),
        (
            "L_ap pair/full",
            small_config(20, ApInput::PairVector, false),
            only(PairObjective::MultiLabel(ApLoss::Full)),
        ),
        (
            "L_ap pair/positive",
            small_config(20, ApInput::PairVector, false),
            only(PairObjective::MultiLabel(ApLoss::PositiveOnly)),
        ),
        (
            "AP-I",
            small_config(20, ApInput::SentVector, false),
            only(PairObjective::Independent),
        ),
        (
            "joint",
            small_config(20, ApInput::SentVector, false),
            Objectives::default(),
        ),
    ];
    cases
        .into_iter()
        .map(|(name, cfg, obj)| Ok((name.to_string(), check_objectives(cfg, &ex, obj, seed)?)))
        .collect()
}

/// Classification heads (sentence and aspect layouts) and CRF tagging, each
/// checked through the encoder.
pub fn finetune_suite(seed: u64) -> Result<Vec<(String, GradCheckReport)>> {
    let cfg = small_config(20, ApInput::SentVector, false);
    let ids = vec![CLS_ID, 7, 8, SEP_ID, 9, 10];
    let tags = TagSet::new(["H".to_string(), "T".to_string()]);
    let cases = [
        (
            "sentence head",
            Task::Sentence,
            vec!["neg".to_string(), "pos".into()],
            Target::Class(Some(1)),
        ),
        (
            "aspect head",
            Task::Aspect,
            vec!["negative".to_string(), "neutral".into(), "positive".into()],
            Target::Class(Some(0)),
        ),
        (
            "CRF NLL",
            Task::Tagging,
            tags.names(),
            Target::Tags(vec![1, 2, 0, 6, 0]),
        ),
    ];
    let mut out = Vec::new();
    for (name, task, labels, target) in cases {
        let mut model = FineTuneModel::new(EncoderParams::init(cfg, seed), task, labels, seed + 1)?;
        model.head.w = Tensor::randn(
            model.head.w.rows(),
            model.head.w.cols(),
            0.5,
            &mut ChaCha8Rng::seed_from_u64(seed),
        );
        if let Some(crf) = &mut model.head.crf {
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
            let k = crf.num_tags();
            crf.trans = Tensor::randn(k, k, 0.5, &mut rng);
            crf.start = Tensor::randn(1, k, 0.5, &mut rng);
            crf.end = Tensor::randn(1, k, 0.5, &mut rng);
        }
        let ex = Encoded {
            ids: ids.clone(),
            target,
        };
        let mut grads = model.zeros_like();
        model.loss(&ex, Mode::Eval, 1.0, Some(&mut grads))?;
        let loss = |m: &FineTuneModel| m.loss(&ex, Mode::Eval, 1.0, None).unwrap_or(f64::NAN);
        // the pre-training heads take no part in fine-tuning losses
        out.push((
            name.to_string(),
            check(&model, &grads, loss, 4, seed, &["sw_", "wp_", "ap_"]),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct Quad(Tensor);

    impl ParamSet for Quad {
        fn named(&self) -> Vec<(String, &Tensor)> {
            vec![("x".into(), &self.0)]
        }
        fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn detects_right_and_wrong_gradients() {
        let p = Quad(Tensor::from_vec(1, 3, vec![1.0, -2.0, 0.5]));
        let loss = |q: &Quad| q.0.data().iter().map(|x| x * x * x).sum::<f64>();
        let good = Quad(Tensor::from_vec(1, 3, p.0.data().iter().map(|x| 3.0 * x * x).collect()));
        assert!(check(&p, &good, loss, 3, 0, &[]).passed());
        let bad = Quad(Tensor::from_vec(1, 3, p.0.data().iter().map(|x| 2.9 * x * x).collect()));
        let report = check(&p, &bad, loss, 3, 0, &[]);
        assert!(!report.passed());
        assert!(report.worst.starts_with("x["));
    }

    #[test]
    fn every_objective_passes() {
        sample_example().check().unwrap();
        for (name, report) in objective_suite(3).unwrap() {
            assert!(report.passed(), "{name}: {report:?}");
            assert!(report.checked > 50, "{name}");
        }
        for (name, report) in finetune_suite(3).unwrap() {
            assert!(report.passed(), "{name}: {report:?}");
        }
    }
}
