//! Pre-training losses over encoder outputs: sentiment word prediction (SW),
//! word polarity prediction (WP), and aspect-sentiment pair prediction (AP)
//! either as one multi-label sigmoid head or independently per position.
//!
//! Every loss returns the unreduced sum over its targets. When a [`Grad`] is
//! passed, gradients scaled by `Grad::scale` are accumulated into the head
//! parameters and into `d_hidden`, ready for [`EncoderParams::backward`].

mod train;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::TokenId;
use crate::encoder::tensor::{log_sum_exp, sigmoid, softmax_in_place, softplus, Tensor};
use crate::encoder::{ApInput, EncoderOutput, EncoderParams, Mode};
use crate::error::{Error, Result};
use crate::masker::{MaskedExample, PairTarget, Slot};
use crate::miner::Polarity;

pub use train::{batch_loss, clip_gradients, pretrain, LogRow, PretrainConfig, TrainingLog};

/// Gradient sink for one sequence.
pub struct Grad<'a> {
    pub params: &'a mut EncoderParams,
    pub d_hidden: &'a mut Tensor,
    pub scale: f64,
}

/// Cross-entropy form of the pair objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApLoss {
    /// Binary cross-entropy over the whole vocabulary.
    #[default]
    Full,
    /// Only the `-y log ŷ` terms of the pair tokens.
    PositiveOnly,
}

impl ApLoss {
    pub fn parse(s: &str) -> Option<ApLoss> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "full" => Some(ApLoss::Full),
            "positive_only" | "positive" => Some(ApLoss::PositiveOnly),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ApLoss::Full => "full",
            ApLoss::PositiveOnly => "positive_only",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairObjective {
    /// Sigmoid head over the vocabulary, one prediction per pair.
    MultiLabel(ApLoss),
    /// Softmax over the vocabulary at each pair position (the SW head).
    Independent,
}

/// Which loss terms are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Objectives {
    pub sw: bool,
    pub wp: bool,
    pub ap: Option<PairObjective>,
}

impl Default for Objectives {
    fn default() -> Self {
        Objectives {
            sw: true,
            wp: true,
            ap: Some(PairObjective::MultiLabel(ApLoss::Full)),
        }
    }
}

impl Objectives {
    pub const SW: Objectives = Objectives {
        sw: true,
        wp: false,
        ap: None,
    };
    pub const SW_WP: Objectives = Objectives {
        sw: true,
        wp: true,
        ap: None,
    };
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_sw: f64,
    pub l_wp: f64,
    pub l_ap: f64,
    pub total: f64,
    pub n_sw: usize,
    pub n_wp: usize,
    pub n_ap: usize,
}

impl LossBreakdown {
    pub fn new(l_sw: f64, l_wp: f64, l_ap: f64, n_sw: usize, n_wp: usize, n_ap: usize) -> Self {
        LossBreakdown {
            l_sw,
            l_wp,
            l_ap,
            total: l_sw + l_wp + l_ap,
            n_sw,
            n_wp,
            n_ap,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.l_sw.is_finite() && self.l_wp.is_finite() && self.l_ap.is_finite() && self.total.is_finite()
    }
}

impl fmt::Display for LossBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "l_sw={:.6} l_wp={:.6} l_ap={:.6} total={:.6}",
            self.l_sw, self.l_wp, self.l_ap, self.total
        )
    }
}

fn check_position(output: &EncoderOutput, pos: usize) -> Result<()> {
    if pos == 0 || pos >= output.len() {
        return Err(Error::Contract(format!(
            "target position {pos} outside 1..{}",
            output.len()
        )));
    }
    Ok(())
}

/// Vocabulary logits of the SW head at one position.
fn sw_logits(params: &EncoderParams, h: &[f64]) -> Vec<f64> {
    let mut z = params.sw_b.data().to_vec();
    match &params.sw_w {
        Some(w) => {
            for (j, &hj) in h.iter().enumerate() {
                for (zv, wv) in z.iter_mut().zip(w.row(j)) {
                    *zv += hj * wv;
                }
            }
        }
        None => {
            for (v, zv) in z.iter_mut().enumerate() {
                *zv += h.iter().zip(params.tok_emb.row(v)).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
    z
}

/// Softmax distribution of the SW head at `pos`; the independent pair
/// objective reads pair positions through this same head.
pub fn sw_probabilities(params: &EncoderParams, output: &EncoderOutput, pos: usize) -> Result<Vec<f64>> {
    check_position(output, pos)?;
    let mut z = sw_logits(params, output.state(pos));
    softmax_in_place(&mut z);
    Ok(z)
}

/// Softmax cross-entropy through the SW head at each slot.
fn softmax_ce(
    params: &EncoderParams,
    output: &EncoderOutput,
    slots: &[Slot],
    mut grad: Option<&mut Grad<'_>>,
) -> Result<f64> {
    let v = params.config.vocab_size;
    let mut loss = 0.0;
    for &(pos, id) in slots {
        check_position(output, pos)?;
        if id as usize >= v {
            return Err(Error::Contract(format!("target id {id} >= vocab size {v}")));
        }
        let h = output.state(pos);
        let mut z = sw_logits(params, h);
        loss += log_sum_exp(&z) - z[id as usize];
        if let Some(g) = grad.as_deref_mut() {
            softmax_in_place(&mut z);
            z[id as usize] -= 1.0;
            sw_backward(params, g, pos, h, &z);
        }
    }
    Ok(loss)
}

fn sw_backward(params: &EncoderParams, g: &mut Grad<'_>, pos: usize, h: &[f64], dz: &[f64]) {
    let s = g.scale;
    for (b, d) in g.params.sw_b.data_mut().iter_mut().zip(dz) {
        *b += s * d;
    }
    let dh = g.d_hidden.row_mut(pos);
    match (&params.sw_w, g.params.sw_w.as_mut()) {
        (Some(w), Some(dw)) => {
            for (j, &hj) in h.iter().enumerate() {
                let wrow = w.row(j);
                dh[j] += s * wrow.iter().zip(dz).map(|(a, b)| a * b).sum::<f64>();
                for (gw, d) in dw.row_mut(j).iter_mut().zip(dz) {
                    *gw += s * hj * d;
                }
            }
        }
        _ => {
            for (v, &d) in dz.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let erow = params.tok_emb.row(v);
                for (o, e) in dh.iter_mut().zip(erow) {
                    *o += s * d * e;
                }
                for (ge, hj) in g.params.tok_emb.row_mut(v).iter_mut().zip(h) {
                    *ge += s * d * hj;
                }
            }
        }
    }
}

/// Sum over targets of `-log softmax(x W + b)[original id]`.
pub fn loss_sw(
    params: &EncoderParams,
    output: &EncoderOutput,
    targets: &[Slot],
    grad: Option<&mut Grad<'_>>,
) -> Result<f64> {
    softmax_ce(params, output, targets, grad)
}

/// Two-class polarity cross-entropy at each target position.
pub fn loss_wp(
    params: &EncoderParams,
    output: &EncoderOutput,
    targets: &[(usize, Polarity)],
    mut grad: Option<&mut Grad<'_>>,
) -> Result<f64> {
    let mut loss = 0.0;
    for &(pos, polarity) in targets {
        check_position(output, pos)?;
        let h = output.state(pos);
        let mut z = params.wp_b.data().to_vec();
        for (j, &hj) in h.iter().enumerate() {
            z[0] += hj * params.wp_w.at(j, 0);
            z[1] += hj * params.wp_w.at(j, 1);
        }
        let c = polarity.class();
        loss += log_sum_exp(&z) - z[c];
        if let Some(g) = grad.as_deref_mut() {
            softmax_in_place(&mut z);
            z[c] -= 1.0;
            let s = g.scale;
            g.params.wp_b.data_mut()[0] += s * z[0];
            g.params.wp_b.data_mut()[1] += s * z[1];
            let dh = g.d_hidden.row_mut(pos);
            for (j, &hj) in h.iter().enumerate() {
                dh[j] += s * (params.wp_w.at(j, 0) * z[0] + params.wp_w.at(j, 1) * z[1]);
                let row = g.params.wp_w.row_mut(j);
                row[0] += s * hj * z[0];
                row[1] += s * hj * z[1];
            }
        }
    }
    Ok(loss)
}

/// Input vector of the AP head for one pair and the positions it came from.
fn ap_vector(params: &EncoderParams, output: &EncoderOutput, target: &PairTarget) -> Result<(Vec<f64>, Vec<usize>)> {
    match params.config.ap_input {
        ApInput::SentVector => Ok((output.state(0).to_vec(), vec![0])),
        ApInput::PairVector => {
            let (Some(a), Some(s)) = (target.aspect.first(), target.sentiment.first()) else {
                return Err(Error::Contract("pair target without aspect or sentiment slot".into()));
            };
            check_position(output, a.0)?;
            check_position(output, s.0)?;
            let mut v = output.state(a.0).to_vec();
            v.extend_from_slice(output.state(s.0));
            Ok((v, vec![a.0, s.0]))
        }
    }
}

/// Logits `v W_ap + b_ap` over the vocabulary.
pub fn ap_logits(params: &EncoderParams, input: &[f64]) -> Vec<f64> {
    let mut z = params.ap_b.data().to_vec();
    for (j, &x) in input.iter().enumerate() {
        for (zv, w) in z.iter_mut().zip(params.ap_w.row(j)) {
            *zv += x * w;
        }
    }
    z
}

/// Pair-token probabilities of the multi-label head for one target.
pub fn ap_probabilities(params: &EncoderParams, output: &EncoderOutput, target: &PairTarget) -> Result<Vec<f64>> {
    let (input, _) = ap_vector(params, output, target)?;
    Ok(ap_logits(params, &input).into_iter().map(sigmoid).collect())
}

/// Multi-label pair loss. With a sentence vector all pairs share one
/// prediction; with pair vectors each pair has its own.
pub fn loss_ap(
    params: &EncoderParams,
    output: &EncoderOutput,
    targets: &[PairTarget],
    bce: ApLoss,
    mut grad: Option<&mut Grad<'_>>,
) -> Result<f64> {
    let v = params.config.vocab_size;
    let d = params.config.hidden_dim;
    let mut loss = 0.0;
    for target in targets {
        if let Some(&bad) = target.token_ids.iter().find(|&&id| id as usize >= v) {
            return Err(Error::Contract(format!("pair id {bad} >= vocab size {v}")));
        }
        let (input, sources) = ap_vector(params, output, target)?;
        let z = ap_logits(params, &input);
        let is_pos = |id: usize| target.token_ids.binary_search(&(id as TokenId)).is_ok();
        let mut dz = vec![0.0; v];
        let mut pair_loss = 0.0;
        match bce {
            ApLoss::Full => {
                for (i, &zi) in z.iter().enumerate() {
                    let y = if is_pos(i) { 1.0 } else { 0.0 };
                    pair_loss += softplus(zi) - y * zi;
                    dz[i] = sigmoid(zi) - y;
                }
            }
            ApLoss::PositiveOnly => {
                for &id in &target.token_ids {
                    let zi = z[id as usize];
                    pair_loss += softplus(-zi);
                    dz[id as usize] = sigmoid(zi) - 1.0;
                }
            }
        }
        loss += pair_loss;
        if let Some(g) = grad.as_deref_mut() {
            let s = g.scale;
            for (b, dv) in g.params.ap_b.data_mut().iter_mut().zip(&dz) {
                *b += s * dv;
            }
            for (j, &x) in input.iter().enumerate() {
                let wrow = params.ap_w.row(j);
                let dx: f64 = wrow.iter().zip(&dz).map(|(a, b)| a * b).sum();
                let (pos, k) = (sources[j / d], j % d);
                g.d_hidden.row_mut(pos)[k] += s * dx;
                if x != 0.0 {
                    for (gw, dv) in g.params.ap_w.row_mut(j).iter_mut().zip(&dz) {
                        *gw += s * x * dv;
                    }
                }
            }
        }
    }
    Ok(loss)
}

/// Softmax cross-entropy at every pair position through the SW head.
pub fn loss_ap_independent(
    params: &EncoderParams,
    output: &EncoderOutput,
    targets: &[PairTarget],
    grad: Option<&mut Grad<'_>>,
) -> Result<f64> {
    let slots: Vec<Slot> = targets.iter().flat_map(|t| t.slots().copied()).collect();
    softmax_ce(params, output, &slots, grad)
}

/// Rejects targets that break the SW/WP/AP partition.
pub fn check_partition(example: &MaskedExample) -> Result<()> {
    let pairs = example.pair_positions();
    for &(pos, _) in &example.sw_targets {
        if pairs.contains(&pos) {
            return Err(Error::Contract(format!("SW target at pair position {pos}")));
        }
        if !example.word_positions.contains(&pos) && !example.fill_positions.contains(&pos) {
            return Err(Error::Contract(format!("SW target at unmasked position {pos}")));
        }
    }
    for &(pos, _) in &example.wp_targets {
        if example.fill_positions.contains(&pos) {
            return Err(Error::Contract(format!("WP target at common fill position {pos}")));
        }
    }
    Ok(())
}

/// All enabled terms for one masked sequence.
pub fn joint_loss(
    params: &EncoderParams,
    output: &EncoderOutput,
    example: &MaskedExample,
    objectives: Objectives,
    mut grad: Option<&mut Grad<'_>>,
) -> Result<LossBreakdown> {
    check_partition(example)?;
    let (l_sw, n_sw) = if objectives.sw {
        (
            loss_sw(params, output, &example.sw_targets, grad.as_deref_mut())?,
            example.sw_targets.len(),
        )
    } else {
        (0.0, 0)
    };
    let (l_wp, n_wp) = if objectives.wp {
        (
            loss_wp(params, output, &example.wp_targets, grad.as_deref_mut())?,
            example.wp_targets.len(),
        )
    } else {
        (0.0, 0)
    };
    let (l_ap, n_ap) = match objectives.ap {
        Some(PairObjective::MultiLabel(bce)) => (
            loss_ap(params, output, &example.ap_targets, bce, grad.as_deref_mut())?,
            example.ap_targets.len(),
        ),
        Some(PairObjective::Independent) => (
            loss_ap_independent(params, output, &example.ap_targets, grad.as_deref_mut())?,
            example.pair_positions().len(),
        ),
        None => (0.0, 0),
    };
    Ok(LossBreakdown::new(l_sw, l_wp, l_ap, n_sw, n_wp, n_ap))
}

/// Forward, loss and backward for one sequence. Gradients scaled by `scale`
/// are added to `grads`.
pub fn accumulate(
    params: &EncoderParams,
    example: &MaskedExample,
    objectives: Objectives,
    mode: Mode<'_>,
    scale: f64,
    grads: &mut EncoderParams,
) -> Result<LossBreakdown> {
    let output = params.forward(&example.corrupted, false, mode)?;
    let mut d_hidden = output.hidden.zeros_like();
    let mut grad = Grad {
        params: grads,
        d_hidden: &mut d_hidden,
        scale,
    };
    let losses = joint_loss(params, &output, example, objectives, Some(&mut grad))?;
    params.backward(&output, &d_hidden, grads);
    Ok(losses)
}

/// Loss of one sequence in eval mode, without gradients.
pub fn evaluate(params: &EncoderParams, example: &MaskedExample, objectives: Objectives) -> Result<LossBreakdown> {
    let output = params.forward(&example.corrupted, false, Mode::Eval)?;
    joint_loss(params, &output, example, objectives, None)
}
