use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Bios, Input, Label, LabeledExample, Sentence, TokenId, CLS_ID, SEP_ID};
use crate::encoder::tensor::{log_sum_exp, softmax_in_place, Tensor};
use crate::encoder::{Checkpoint, EncoderParams, Mode};
use crate::error::{Error, Result};
use crate::finetune::crf::{Crf, TagSet};
use crate::gradcheck::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Whole-sentence polarity from `[CLS]`.
    Sentence,
    /// `[CLS] aspect [SEP] context`, classified from `[CLS]`.
    Aspect,
    /// Opinion role labeling with BIOS tags and a CRF.
    Tagging,
}

impl Task {
    pub fn parse(s: &str) -> Option<Task> {
        match s.to_ascii_lowercase().as_str() {
            "sentence" | "sentence-level" | "sentence_level" => Some(Task::Sentence),
            "aspect" | "aspect-level" | "aspect_level" => Some(Task::Aspect),
            "tagging" | "orl" | "opinion-role" | "opinion_role" => Some(Task::Tagging),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Sentence => "sentence",
            Task::Aspect => "aspect",
            Task::Tagging => "tagging",
        }
    }
}

/// Output layer of a fine-tuned model.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskHead {
    pub task: Task,
    /// Class labels, or tag names in tag-id order.
    pub labels: Vec<String>,
    /// d × classes (or d × tags for emissions).
    pub w: Tensor,
    pub b: Tensor,
    pub crf: Option<Crf>,
}

impl TaskHead {
    pub fn init(task: Task, labels: Vec<String>, hidden_dim: usize, init_std: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = labels.len();
        TaskHead {
            task,
            w: Tensor::randn(hidden_dim, k, init_std, &mut rng),
            b: Tensor::zeros(1, k),
            crf: (task == Task::Tagging).then(|| Crf::zeros(k)),
            labels,
        }
    }

    pub fn tag_set(&self) -> Option<TagSet> {
        (self.task == Task::Tagging).then(|| {
            TagSet::new(
                self.labels
                    .iter()
                    .filter_map(|l| Bios::parse(l)?.role().map(str::to_string)),
            )
        })
    }
}

/// Encoder plus task head, trained end to end.
#[derive(Debug, Clone, PartialEq)]
pub struct FineTuneModel {
    pub encoder: EncoderParams,
    pub head: TaskHead,
}

/// Target in model coordinates. `Class(None)` marks a label unseen in training.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Class(Option<usize>),
    /// Tag ids for positions 1..=n.
    Tags(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub ids: Vec<TokenId>,
    pub target: Target,
}

/// `[CLS]` followed by the sentence, cut to `max_len` ids.
pub fn encode_single(sentence: &Sentence, max_len: usize) -> Vec<TokenId> {
    let mut ids = Vec::with_capacity(sentence.len() + 1);
    ids.push(CLS_ID);
    ids.extend(sentence.tokens.iter().take(max_len.saturating_sub(1)));
    ids
}

/// `[CLS] aspect [SEP] context`. Overlong inputs lose context tokens from the
/// end; the aspect is never cut.
pub fn encode_pair(aspect: &Sentence, context: &Sentence, max_len: usize) -> Result<Vec<TokenId>> {
    if aspect.len() + 2 > max_len {
        return Err(Error::Contract(format!(
            "aspect of {} tokens does not fit in {max_len} positions",
            aspect.len()
        )));
    }
    let room = max_len - aspect.len() - 2;
    let mut ids = Vec::with_capacity(max_len);
    ids.push(CLS_ID);
    ids.extend(&aspect.tokens);
    ids.push(SEP_ID);
    ids.extend(context.tokens.iter().take(room));
    Ok(ids)
}

/// Sorted distinct class labels, or the tag names of every role seen.
pub fn label_inventory(task: Task, examples: &[LabeledExample]) -> Vec<String> {
    match task {
        Task::Tagging => TagSet::from_tags(examples.iter().filter_map(|e| match &e.label {
            Label::Tags(t) => Some(t.as_slice()),
            _ => None,
        }))
        .names(),
        _ => {
            let mut labels: Vec<String> = examples
                .iter()
                .filter_map(|e| match &e.label {
                    Label::Class(c) => Some(c.clone()),
                    _ => None,
                })
                .collect();
            labels.sort();
            labels.dedup();
            labels
        }
    }
}

impl FineTuneModel {
    pub fn new(encoder: EncoderParams, task: Task, labels: Vec<String>, seed: u64) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Config("no labels found in the training data".into()));
        }
        let cfg = &encoder.config;
        let head = TaskHead::init(task, labels, cfg.hidden_dim, cfg.init_std, seed);
        Ok(FineTuneModel { encoder, head })
    }

    pub fn task(&self) -> Task {
        self.head.task
    }

    /// Converts one labeled example into ids and a target.
    pub fn encode(&self, example: &LabeledExample) -> Result<Encoded> {
        let max_len = self.encoder.config.max_seq_len;
        let mismatch = || {
            Error::Config(format!(
                "example {} does not fit task {}",
                example.doc_id,
                self.task().as_str()
            ))
        };
        match (self.task(), &example.input, &example.label) {
            (Task::Sentence, Input::Single(s), Label::Class(c)) => Ok(Encoded {
                ids: encode_single(s, max_len),
                target: Target::Class(self.head.labels.iter().position(|l| l == c)),
            }),
            (Task::Aspect, Input::Pair { aspect, context }, Label::Class(c)) => Ok(Encoded {
                ids: encode_pair(aspect, context, max_len)?,
                target: Target::Class(self.head.labels.iter().position(|l| l == c)),
            }),
            (Task::Tagging, Input::Single(s), Label::Tags(tags)) => {
                let ids = encode_single(s, max_len);
                let set = self.head.tag_set().expect("tagging head has tags");
                let tags = tags[..ids.len() - 1].iter().map(|t| set.id(t).unwrap_or(0)).collect();
                Ok(Encoded {
                    ids,
                    target: Target::Tags(tags),
                })
            }
            _ => Err(mismatch()),
        }
    }

    fn class_logits(&self, h: &[f64]) -> Vec<f64> {
        let mut z = self.head.b.data().to_vec();
        for (j, &x) in h.iter().enumerate() {
            for (zv, w) in z.iter_mut().zip(self.head.w.row(j)) {
                *zv += x * w;
            }
        }
        z
    }

    fn emissions(&self, hidden: &Tensor) -> Tensor {
        let n = hidden.rows() - 1;
        let k = self.head.labels.len();
        let mut e = Tensor::zeros(n, k);
        for t in 0..n {
            let z = self.class_logits(hidden.row(t + 1));
            e.row_mut(t).copy_from_slice(&z);
        }
        e
    }

    /// Class probabilities for encoded ids (classification tasks).
    pub fn probabilities(&self, ids: &[TokenId]) -> Result<Vec<f64>> {
        if self.task() == Task::Tagging {
            return Err(Error::Config("a tagging head has no class probabilities".into()));
        }
        let out = self.encoder.forward(ids, false, Mode::Eval)?;
        let mut z = self.class_logits(out.state(0));
        softmax_in_place(&mut z);
        Ok(z)
    }

    /// Best tag path for encoded ids (tagging task).
    pub fn decode(&self, ids: &[TokenId]) -> Result<Vec<usize>> {
        let crf = self
            .head
            .crf
            .as_ref()
            .ok_or_else(|| Error::Config("head has no CRF".into()))?;
        let out = self.encoder.forward(ids, false, Mode::Eval)?;
        Ok(crf.viterbi(&self.emissions(&out.hidden)))
    }

    /// Loss of one encoded example; with `grads`, adds `scale`-weighted
    /// gradients for the head and encoder.
    pub fn loss(&self, ex: &Encoded, mode: Mode<'_>, scale: f64, grads: Option<&mut FineTuneModel>) -> Result<f64> {
        let out = self.encoder.forward(&ex.ids, false, mode)?;
        let mut d_hidden = out.hidden.zeros_like();
        let loss;
        match (&ex.target, grads) {
            (Target::Class(c), grads) => {
                let c = c.ok_or_else(|| Error::Contract("training label missing from the label set".into()))?;
                let h = out.state(0);
                let mut z = self.class_logits(h);
                loss = log_sum_exp(&z) - z[c];
                let Some(g) = grads else {
                    return Ok(loss);
                };
                softmax_in_place(&mut z);
                z[c] -= 1.0;
                head_backward(&self.head.w, h, &z, scale, &mut g.head, d_hidden.row_mut(0));
                self.encoder.backward(&out, &d_hidden, &mut g.encoder);
            }
            (Target::Tags(tags), grads) => {
                let crf = self
                    .head
                    .crf
                    .as_ref()
                    .ok_or_else(|| Error::Config("head has no CRF".into()))?;
                let e = self.emissions(&out.hidden);
                let Some(g) = grads else {
                    return Ok(crf.nll(&e, tags));
                };
                let mut de = e.zeros_like();
                loss = crf.nll_backward(
                    &e,
                    tags,
                    scale,
                    &mut de,
                    g.head.crf.as_mut().expect("gradient head has CRF"),
                );
                for t in 0..tags.len() {
                    let h = out.state(t + 1);
                    head_backward(&self.head.w, h, de.row(t), 1.0, &mut g.head, d_hidden.row_mut(t + 1));
                }
                self.encoder.backward(&out, &d_hidden, &mut g.encoder);
            }
        }
        Ok(loss)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in ParamSet::tensors_mut(&mut z) {
            t.fill(0.0);
        }
        z
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut extra = vec![
            ("head.w".to_string(), self.head.w.clone()),
            ("head.b".to_string(), self.head.b.clone()),
        ];
        if let Some(crf) = &self.head.crf {
            extra.push(("crf.trans".into(), crf.trans.clone()));
            extra.push(("crf.start".into(), crf.start.clone()));
            extra.push(("crf.end".into(), crf.end.clone()));
        }
        let mut ckpt = Checkpoint::new(self.encoder.clone());
        ckpt.extra = extra;
        ckpt.meta = serde_json::json!({ "task": self.task(), "labels": self.head.labels });
        ckpt
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let missing = || Error::Config("checkpoint has no fine-tuned task head".into());
        let task: Task = serde_json::from_value(ckpt.meta.get("task").cloned().ok_or_else(missing)?)
            .map_err(|e| Error::Checkpoint(format!("bad task in header: {e}")))?;
        let labels: Vec<String> = serde_json::from_value(ckpt.meta.get("labels").cloned().ok_or_else(missing)?)
            .map_err(|e| Error::Checkpoint(format!("bad labels in header: {e}")))?;
        let get = |name: &str| {
            ckpt.extra(name)
                .cloned()
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
        };
        let (w, b) = (get("head.w")?, get("head.b")?);
        let crf = if task == Task::Tagging {
            Some(Crf {
                trans: get("crf.trans")?,
                start: get("crf.start")?,
                end: get("crf.end")?,
            })
        } else {
            None
        };
        let d = ckpt.params.config.hidden_dim;
        if w.shape() != (d, labels.len()) || b.len() != labels.len() {
            return Err(Error::Checkpoint("task head shape does not match its labels".into()));
        }
        Ok(FineTuneModel {
            encoder: ckpt.params,
            head: TaskHead {
                task,
                labels,
                w,
                b,
                crf,
            },
        })
    }
}

fn head_backward(w: &Tensor, h: &[f64], dz: &[f64], scale: f64, g: &mut TaskHead, dh: &mut [f64]) {
    for (gb, d) in g.b.data_mut().iter_mut().zip(dz) {
        *gb += scale * d;
    }
    for (j, &x) in h.iter().enumerate() {
        dh[j] += scale * w.row(j).iter().zip(dz).map(|(a, b)| a * b).sum::<f64>();
        for (gw, d) in g.w.row_mut(j).iter_mut().zip(dz) {
            *gw += scale * x * d;
        }
    }
}

impl ParamSet for FineTuneModel {
    fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = self.encoder.named_tensors();
        out.push(("head.w".into(), &self.head.w));
        out.push(("head.b".into(), &self.head.b));
        if let Some(crf) = &self.head.crf {
            out.push(("crf.trans".into(), &crf.trans));
            out.push(("crf.start".into(), &crf.start));
            out.push(("crf.end".into(), &crf.end));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.encoder.tensors_mut();
        out.push(&mut self.head.w);
        out.push(&mut self.head.b);
        if let Some(crf) = &mut self.head.crf {
            out.extend([&mut crf.trans, &mut crf.start, &mut crf.end]);
        }
        out
    }
}
