//! Spans, BIOS conversion and span-overlap F1.

use serde::{Deserialize, Serialize};

use crate::corpus::Bios;

/// A labeled token range, `end` inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaggedSpan {
    pub role: String,
    pub start: usize,
    pub end: usize,
}

impl TaggedSpan {
    pub fn new(role: impl Into<String>, start: usize, end: usize) -> Self {
        assert!(start <= end, "span start after end");
        TaggedSpan {
            role: role.into(),
            start,
            end,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn overlap(&self, other: &TaggedSpan) -> usize {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        if self.role == other.role && lo <= hi {
            hi - lo + 1
        } else {
            0
        }
    }
}

/// Reads spans off a tag sequence. `B` opens a span, `I` of the same role
/// extends it, `S` is a one-token span, and an `I` with nothing open (or a
/// different role open) starts a new span.
pub fn spans_from_bios(tags: &[Bios]) -> Vec<TaggedSpan> {
    let mut spans = Vec::new();
    let mut open: Option<TaggedSpan> = None;
    for (i, tag) in tags.iter().enumerate() {
        match tag {
            Bios::I(role) if open.as_ref().is_some_and(|s| &s.role == role) => {
                open.as_mut().unwrap().end = i;
            }
            Bios::B(role) | Bios::I(role) => {
                spans.extend(open.take());
                open = Some(TaggedSpan::new(role.clone(), i, i));
            }
            Bios::S(role) => {
                spans.extend(open.take());
                spans.push(TaggedSpan::new(role.clone(), i, i));
            }
            Bios::O => spans.extend(open.take()),
        }
    }
    spans.extend(open);
    spans
}

/// Writes non-overlapping spans as tags over `len` tokens.
pub fn bios_from_spans(spans: &[TaggedSpan], len: usize) -> Vec<Bios> {
    let mut tags = vec![Bios::O; len];
    for s in spans {
        if s.start == s.end {
            tags[s.start] = Bios::S(s.role.clone());
        } else {
            tags[s.start] = Bios::B(s.role.clone());
            for t in &mut tags[s.start + 1..=s.end] {
                *t = Bios::I(s.role.clone());
            }
        }
    }
    tags
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf { precision, recall, f1 }
    }

    fn perfect() -> Self {
        Prf {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleScores {
    pub role: String,
    pub binary: Prf,
    pub proportional: Prf,
    pub gold_spans: usize,
    pub predicted_spans: usize,
}

/// Per-sentence span lists, predicted and gold.
pub type SpanPair = (Vec<TaggedSpan>, Vec<TaggedSpan>);

/// Binary and proportional span F1 for every role appearing in either side.
///
/// Binary: a predicted span counts once if it overlaps any gold span of its
/// role; a gold span counts once if any prediction overlaps it. Proportional:
/// each span contributes the fraction of its tokens covered by the other
/// side. A role absent from both sides scores 1.
pub fn span_metrics(sentences: &[SpanPair]) -> Vec<RoleScores> {
    let mut roles: Vec<String> = sentences
        .iter()
        .flat_map(|(p, g)| p.iter().chain(g).map(|s| s.role.clone()))
        .collect();
    roles.sort();
    roles.dedup();
    roles.into_iter().map(|role| role_scores(&role, sentences)).collect()
}

fn covered(span: &TaggedSpan, others: &[TaggedSpan]) -> usize {
    (span.start..=span.end)
        .filter(|&i| others.iter().any(|o| o.role == span.role && o.start <= i && i <= o.end))
        .count()
}

fn role_scores(role: &str, sentences: &[SpanPair]) -> RoleScores {
    let (mut n_pred, mut n_gold) = (0usize, 0usize);
    let (mut bin_p, mut bin_r) = (0usize, 0usize);
    let (mut prop_p, mut prop_r) = (0.0, 0.0);
    for (pred, gold) in sentences {
        for p in pred.iter().filter(|s| s.role == role) {
            n_pred += 1;
            if gold.iter().any(|g| p.overlap(g) > 0) {
                bin_p += 1;
            }
            prop_p += covered(p, gold) as f64 / p.len() as f64;
        }
        for g in gold.iter().filter(|s| s.role == role) {
            n_gold += 1;
            if pred.iter().any(|p| g.overlap(p) > 0) {
                bin_r += 1;
            }
            prop_r += covered(g, pred) as f64 / g.len() as f64;
        }
    }
    let ratio = |num: f64, den: usize| if den == 0 { 0.0 } else { num / den as f64 };
    let (binary, proportional) = if n_pred == 0 && n_gold == 0 {
        (Prf::perfect(), Prf::perfect())
    } else {
        (
            Prf::new(ratio(bin_p as f64, n_pred), ratio(bin_r as f64, n_gold)),
            Prf::new(ratio(prop_p, n_pred), ratio(prop_r, n_gold)),
        )
    };
    RoleScores {
        role: role.to_string(),
        binary,
        proportional,
        gold_spans: n_gold,
        predicted_spans: n_pred,
    }
}

/// Fraction of equal entries; 0 for empty input.
pub fn accuracy<T: PartialEq>(preds: &[T], golds: &[T]) -> f64 {
    assert_eq!(preds.len(), golds.len(), "prediction and gold counts differ");
    if preds.is_empty() {
        return 0.0;
    }
    preds.iter().zip(golds).filter(|(p, g)| p == g).count() as f64 / preds.len() as f64
}
