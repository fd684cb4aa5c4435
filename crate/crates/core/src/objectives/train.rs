use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{AdamConfig, AdamState, EncoderParams, Mode};
use crate::error::{Error, Result};
use crate::masker::{derive_seed, MaskedExample};
use crate::objectives::{accumulate, LossBreakdown, Objectives};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub objectives: Objectives,
    /// Global gradient-norm clip; 0 disables clipping.
    pub max_grad_norm: f64,
    /// Write a log row every this many optimizer steps.
    pub log_every: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 3,
            batch_size: 32,
            adam: AdamConfig::default(),
            objectives: Objectives::default(),
            max_grad_norm: 1.0,
            log_every: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub l_sw: f64,
    pub l_wp: f64,
    pub l_ap: f64,
    pub total: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("step\tl_sw\tl_wp\tl_ap\ttotal\tlr\n");
        for r in &self.rows {
            writeln!(
                out,
                "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:e}",
                r.step, r.l_sw, r.l_wp, r.l_ap, r.total, r.lr
            )
            .unwrap();
        }
        out
    }
}

/// Mean losses of one batch: each term summed over its targets and divided
/// by the number of sequences.
pub fn batch_loss(
    params: &EncoderParams,
    batch: &[&MaskedExample],
    objectives: Objectives,
    rng: Option<&mut ChaCha8Rng>,
    grads: &mut EncoderParams,
) -> Result<LossBreakdown> {
    let scale = 1.0 / batch.len().max(1) as f64;
    let (mut sw, mut wp, mut ap) = (0.0, 0.0, 0.0);
    let (mut n_sw, mut n_wp, mut n_ap) = (0, 0, 0);
    let mut rng = rng;
    for ex in batch {
        let mode = match rng.as_deref_mut() {
            Some(r) => Mode::Train(r),
            None => Mode::Eval,
        };
        let l = accumulate(params, ex, objectives, mode, scale, grads)?;
        sw += l.l_sw;
        wp += l.l_wp;
        ap += l.l_ap;
        n_sw += l.n_sw;
        n_wp += l.n_wp;
        n_ap += l.n_ap;
    }
    Ok(LossBreakdown::new(sw * scale, wp * scale, ap * scale, n_sw, n_wp, n_ap))
}

/// Scales `grads` so their global L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_gradients(grads: &mut EncoderParams, max_norm: f64) -> f64 {
    let norm = grads
        .tensors()
        .iter()
        .flat_map(|t| t.data().iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if max_norm > 0.0 && norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Joint pre-training over fixed masked examples. Batches are reshuffled every
/// epoch from `config.seed`; dropout draws from an independent stream.
///
/// `on_epoch` runs after each epoch with the epoch index, e.g. to save a
/// checkpoint that a later divergence can point back to.
pub fn pretrain(
    params: &mut EncoderParams,
    adam: &mut AdamState,
    data: &[MaskedExample],
    config: &PretrainConfig,
    mut on_epoch: impl FnMut(usize, &EncoderParams, &AdamState) -> Result<()>,
) -> Result<TrainingLog> {
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let mut order_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1));
    let mut log = TrainingLog::default();
    let mut window = Vec::new();
    let mut grads = params.zeros_like();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut order_rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&MaskedExample> = chunk.iter().map(|&i| &data[i]).collect();
            for t in grads.tensors_mut() {
                t.fill(0.0);
            }
            let losses = batch_loss(params, &batch, config.objectives, Some(&mut dropout_rng), &mut grads)?;
            let step = adam.step + 1;
            if !losses.is_finite() {
                return Err(Error::Divergence {
                    step,
                    detail: format!("non-finite loss ({losses})"),
                    last_good: None,
                });
            }
            clip_gradients(&mut grads, config.max_grad_norm);
            if let Some(name) = grads.first_non_finite() {
                return Err(Error::Divergence {
                    step,
                    detail: format!("non-finite gradient in {name}"),
                    last_good: None,
                });
            }
            adam.update(params.tensors_mut(), grads.tensors(), &config.adam);
            if let Some(name) = params.first_non_finite() {
                return Err(Error::Divergence {
                    step,
                    detail: format!("non-finite parameter in {name} after update"),
                    last_good: None,
                });
            }
            window.push(losses);
            if config.log_every > 0 && step % config.log_every as u64 == 0 {
                log.rows.push(mean_row(step, &window, config.adam.lr));
                window.clear();
            }
        }
        on_epoch(epoch, params, adam)?;
    }
    if !window.is_empty() {
        log.rows.push(mean_row(adam.step, &window, config.adam.lr));
    }
    Ok(log)
}

fn mean_row(step: u64, window: &[LossBreakdown], lr: f64) -> LogRow {
    let n = window.len() as f64;
    let mean = |f: fn(&LossBreakdown) -> f64| window.iter().map(f).sum::<f64>() / n;
    let (l_sw, l_wp, l_ap) = (mean(|l| l.l_sw), mean(|l| l.l_wp), mean(|l| l.l_ap));
    LogRow {
        step,
        l_sw,
        l_wp,
        l_ap,
        total: l_sw + l_wp + l_ap,
        lr,
    }
}
