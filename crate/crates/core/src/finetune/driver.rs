use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::LabeledExample;
use crate::encoder::{AdamConfig, AdamState, EncoderParams, Mode};
use crate::error::{Error, Result};
use crate::finetune::head::{label_inventory, Encoded, FineTuneModel, Target, Task};
use crate::finetune::spans::{accuracy, span_metrics, spans_from_bios, RoleScores, SpanPair};
use crate::gradcheck::ParamSet;
use crate::masker::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub lr: f64,
    pub batch_size: usize,
    /// Maximum number of epochs.
    pub epochs: usize,
    pub max_grad_norm: f64,
    /// Keep the epoch with the best dev score rather than the last one.
    pub keep_best_epoch: bool,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            lr: 3e-5,
            batch_size: 16,
            epochs: 5,
            max_grad_norm: 1.0,
            keep_best_epoch: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub examples: usize,
    pub accuracy: Option<f64>,
    pub roles: Vec<RoleScores>,
}

impl EvalReport {
    /// Accuracy for classification; mean binary F1 over roles for tagging.
    pub fn primary(&self) -> f64 {
        match self.accuracy {
            Some(a) => a,
            None if self.roles.is_empty() => 0.0,
            None => self.roles.iter().map(|r| r.binary.f1).sum::<f64>() / self.roles.len() as f64,
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric\tvalue\n");
        writeln!(out, "task\t{}", self.task.as_str()).unwrap();
        writeln!(out, "examples\t{}", self.examples).unwrap();
        if let Some(a) = self.accuracy {
            writeln!(out, "accuracy\t{a:.6}").unwrap();
        }
        for r in &self.roles {
            for (name, prf) in [("binary", r.binary), ("prop", r.proportional)] {
                writeln!(out, "{}.{name}_precision\t{:.6}", r.role, prf.precision).unwrap();
                writeln!(out, "{}.{name}_recall\t{:.6}", r.role, prf.recall).unwrap();
                writeln!(out, "{}.{name}_f1\t{:.6}", r.role, prf.f1).unwrap();
            }
        }
        out
    }
}

/// Scores `model` on labeled examples.
pub fn evaluate(model: &FineTuneModel, examples: &[LabeledExample]) -> Result<EvalReport> {
    let encoded: Vec<Encoded> = examples.iter().map(|e| model.encode(e)).collect::<Result<_>>()?;
    evaluate_encoded(model, &encoded)
}

fn evaluate_encoded(model: &FineTuneModel, encoded: &[Encoded]) -> Result<EvalReport> {
    let task = model.task();
    if task == Task::Tagging {
        let set = model.head.tag_set().expect("tagging head");
        let mut pairs: Vec<SpanPair> = Vec::with_capacity(encoded.len());
        for ex in encoded {
            let Target::Tags(gold) = &ex.target else { unreachable!() };
            let pred = model.decode(&ex.ids)?;
            let to_tags = |ids: &[usize]| ids.iter().map(|&i| set.tag(i)).collect::<Vec<_>>();
            pairs.push((spans_from_bios(&to_tags(&pred)), spans_from_bios(&to_tags(gold))));
        }
        return Ok(EvalReport {
            task,
            examples: encoded.len(),
            accuracy: None,
            roles: span_metrics(&pairs),
        });
    }
    let mut preds = Vec::with_capacity(encoded.len());
    let mut golds = Vec::with_capacity(encoded.len());
    for ex in encoded {
        let Target::Class(gold) = ex.target else { unreachable!() };
        let p = model.probabilities(&ex.ids)?;
        let best = (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b });
        preds.push(Some(best));
        golds.push(gold);
    }
    Ok(EvalReport {
        task,
        examples: encoded.len(),
        accuracy: Some(accuracy(&preds, &golds)),
        roles: Vec::new(),
    })
}

/// One fine-tuning run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub seed: u64,
    pub model: FineTuneModel,
    pub dev: EvalReport,
    pub best_epoch: usize,
    pub epoch_scores: Vec<f64>,
}

impl RunResult {
    pub fn score(&self) -> f64 {
        self.dev.primary()
    }
}

/// Trains a fresh head on top of `encoder` (updated end to end) and scores
/// the dev set after every epoch.
pub fn finetune(
    task: Task,
    encoder: &EncoderParams,
    train: &[LabeledExample],
    dev: &[LabeledExample],
    config: &FinetuneConfig,
) -> Result<RunResult> {
    if train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let labels = label_inventory(task, train);
    let mut model = FineTuneModel::new(encoder.clone(), task, labels, derive_seed(config.seed, 2))?;
    let train_enc: Vec<Encoded> = train.iter().map(|e| model.encode(e)).collect::<Result<_>>()?;
    let dev_enc: Vec<Encoded> = dev.iter().map(|e| model.encode(e)).collect::<Result<_>>()?;

    let adam_cfg = AdamConfig {
        lr: config.lr,
        ..Default::default()
    };
    let mut adam = AdamState::new(model.named().into_iter().map(|(_, t)| t));
    let mut order_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1));
    let mut grads = model.zeros_like();
    let mut order: Vec<usize> = (0..train_enc.len()).collect();
    let mut best: Option<(f64, usize, FineTuneModel, EvalReport)> = None;
    let mut epoch_scores = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs.max(1) {
        order.shuffle(&mut order_rng);
        for chunk in order.chunks(config.batch_size) {
            for t in ParamSet::tensors_mut(&mut grads) {
                t.fill(0.0);
            }
            let scale = 1.0 / chunk.len() as f64;
            let mut total = 0.0;
            for &i in chunk {
                total += model.loss(&train_enc[i], Mode::Train(&mut dropout_rng), scale, Some(&mut grads))?;
            }
            if !total.is_finite() {
                return Err(Error::Divergence {
                    step: adam.step + 1,
                    detail: format!("non-finite fine-tuning loss in epoch {epoch}"),
                    last_good: None,
                });
            }
            clip(&mut grads, config.max_grad_norm);
            let grad_list: Vec<&crate::encoder::Tensor> = grads.named().into_iter().map(|(_, t)| t).collect();
            adam.update(ParamSet::tensors_mut(&mut model), grad_list, &adam_cfg);
        }
        let report = evaluate_encoded(&model, &dev_enc)?;
        let score = report.primary();
        epoch_scores.push(score);
        let better = best.as_ref().is_none_or(|(s, ..)| score > *s);
        if !config.keep_best_epoch || better {
            best = Some((score, epoch, model.clone(), report));
        }
    }
    let (_, best_epoch, model, dev) = best.expect("at least one epoch");
    Ok(RunResult {
        seed: config.seed,
        model,
        dev,
        best_epoch,
        epoch_scores,
    })
}

fn clip(grads: &mut FineTuneModel, max_norm: f64) {
    let norm = grads
        .named()
        .iter()
        .flat_map(|(_, t)| t.data().iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if max_norm > 0.0 && norm > max_norm {
        for t in ParamSet::tensors_mut(grads) {
            t.scale(max_norm / norm);
        }
    }
}

/// Index of the median score; ties keep input order. For three runs this is
/// the middle one.
pub fn select_median(scores: &[f64]) -> Option<usize> {
    if scores.is_empty() {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    Some(idx[(scores.len() - 1) / 2])
}

/// Runs for several seeds and the index of the median-dev run.
#[derive(Debug, Clone)]
pub struct SeedSweep {
    pub runs: Vec<RunResult>,
    pub selected: usize,
}

impl SeedSweep {
    pub fn selected(&self) -> &RunResult {
        &self.runs[self.selected]
    }

    pub fn results(&self) -> ResultsFile {
        ResultsFile {
            task: self.runs[0].dev.task,
            metric: if self.runs[0].dev.accuracy.is_some() {
                "accuracy"
            } else {
                "mean_binary_f1"
            }
            .into(),
            runs: self
                .runs
                .iter()
                .map(|r| SeedScore {
                    seed: r.seed,
                    dev_score: r.score(),
                    best_epoch: r.best_epoch,
                    epoch_scores: r.epoch_scores.clone(),
                })
                .collect(),
            selected_seed: self.selected().seed,
            selected_score: self.selected().score(),
        }
    }
}

pub fn finetune_seeds(
    task: Task,
    encoder: &EncoderParams,
    train: &[LabeledExample],
    dev: &[LabeledExample],
    config: &FinetuneConfig,
    seeds: &[u64],
) -> Result<SeedSweep> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let runs: Vec<RunResult> = seeds
        .iter()
        .map(|&seed| finetune(task, encoder, train, dev, &FinetuneConfig { seed, ..*config }))
        .collect::<Result<_>>()?;
    let scores: Vec<f64> = runs.iter().map(RunResult::score).collect();
    let selected = select_median(&scores).expect("non-empty");
    Ok(SeedSweep { runs, selected })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedScore {
    pub seed: u64,
    pub dev_score: f64,
    pub best_epoch: usize,
    pub epoch_scores: Vec<f64>,
}

/// Machine-readable summary of a multi-seed fine-tuning job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub task: Task,
    pub metric: String,
    pub runs: Vec<SeedScore>,
    pub selected_seed: u64,
    pub selected_score: f64,
}

/// Stable fold assignment from a document id (64-bit FNV-1a).
pub fn fold_of(doc_id: &str, folds: usize) -> usize {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in doc_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    (h % folds.max(1) as u64) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<EvalReport>,
    pub mean: f64,
}

/// k-fold cross-validation: each fold is scored by a model trained on the
/// others, keeping the last epoch.
pub fn cross_validate(
    task: Task,
    encoder: &EncoderParams,
    data: &[LabeledExample],
    folds: usize,
    config: &FinetuneConfig,
) -> Result<CvReport> {
    if folds < 2 {
        return Err(Error::Config("cross-validation needs at least 2 folds".into()));
    }
    let cfg = FinetuneConfig {
        keep_best_epoch: false,
        ..*config
    };
    let mut reports = Vec::with_capacity(folds);
    for f in 0..folds {
        let (test, train): (Vec<LabeledExample>, Vec<LabeledExample>) =
            data.iter().cloned().partition(|e| fold_of(&e.doc_id, folds) == f);
        if test.is_empty() || train.is_empty() {
            return Err(Error::Config(format!(
                "fold {f} is empty; too few documents for {folds} folds"
            )));
        }
        reports.push(finetune(task, encoder, &train, &test, &cfg)?.dev);
    }
    let mean = reports.iter().map(EvalReport::primary).sum::<f64>() / folds as f64;
    Ok(CvReport { folds: reports, mean })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_picks_middle() {
        assert_eq!(select_median(&[0.7, 0.9, 0.8]), Some(2));
        assert_eq!(select_median(&[0.5, 0.5, 0.5]), Some(1));
        assert_eq!(select_median(&[0.1]), Some(0));
        assert_eq!(select_median(&[]), None);
    }

    #[test]
    fn folds_are_stable_and_spread() {
        assert_eq!(fold_of("doc-17", 4), fold_of("doc-17", 4));
        let mut counts = [0; 4];
        for i in 0..400 {
            counts[fold_of(&format!("doc{i}"), 4)] += 1;
        }
        assert!(counts.iter().all(|&c| c > 60), "{counts:?}");
    }
}
