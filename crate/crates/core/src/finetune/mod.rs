//! Downstream heads: sentence and aspect classification from `[CLS]`, and
//! opinion role labeling with BIOS tags decoded by a linear-chain CRF.

mod crf;
mod driver;
mod grid;
mod head;
mod spans;

pub use crf::{Crf, TagSet};
pub use driver::{
    cross_validate, evaluate, finetune, finetune_seeds, fold_of, select_median, CvReport, EvalReport, FinetuneConfig,
    ResultsFile, RunResult, SeedScore, SeedSweep,
};
pub use grid::{load_grid, parse_grid, GridLine, GridRun, DEFAULT_GRID};
pub use head::{encode_pair, encode_single, label_inventory, Encoded, FineTuneModel, Target, Task, TaskHead};
pub use spans::{accuracy, bios_from_spans, span_metrics, spans_from_bios, Prf, RoleScores, SpanPair, TaggedSpan};

use crate::corpus::Sentence;
use crate::error::Result;

/// Class probabilities for one sentence.
pub fn classify_sentence(model: &FineTuneModel, sentence: &Sentence) -> Result<Vec<f64>> {
    model.probabilities(&encode_single(sentence, model.encoder.config.max_seq_len))
}

/// Class probabilities for an aspect in its context.
pub fn classify_aspect(model: &FineTuneModel, aspect: &Sentence, context: &Sentence) -> Result<Vec<f64>> {
    model.probabilities(&encode_pair(aspect, context, model.encoder.config.max_seq_len)?)
}

/// Predicted BIOS tags for a sentence.
pub fn tag_sentence(model: &FineTuneModel, sentence: &Sentence) -> Result<Vec<crate::corpus::Bios>> {
    let set = model
        .head
        .tag_set()
        .ok_or_else(|| crate::Error::Config("model has no tagging head".into()))?;
    let path = model.decode(&encode_single(sentence, model.encoder.config.max_seq_len))?;
    Ok(path.into_iter().map(|i| set.tag(i)).collect())
}
