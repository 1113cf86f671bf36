//! Turning start/end probability matrices into entity spans.
//!
//! Only CONTEXT positions can become indices; `[CLS]`, `[SEP]` and the
//! demonstration are dropped. A row counts as an index when class 1 is
//! strictly more probable than class 0, so an exact tie is not an index.
//!
//! Pairing follows the nearest-match rule: an end pairs with the closest
//! start before it, and a start with the closest end after it. Equivalently,
//! sweeping positions left to right (a start is seen before an end at the
//! same position), a pair is emitted whenever an end directly follows a
//! pending start; any earlier pending start and any end with nothing pending
//! are discarded.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::LabeledSentence;
use crate::error::Result;
use crate::model::ProbMatrices;
use crate::spanconv::{spans_to_iob2, EntitySpan, MrcInstance, PositionRole};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IndexSets {
    pub starts: Vec<usize>,
    pub ends: Vec<usize>,
}

pub fn index_sets(probs: &ProbMatrices, roles: &[PositionRole]) -> IndexSets {
    assert_eq!(probs.start.nrows(), roles.len(), "probability rows must align with roles");
    assert_eq!(probs.end.nrows(), roles.len(), "probability rows must align with roles");
    let pick = |m: &ndarray::Array2<f64>| {
        roles
            .iter()
            .enumerate()
            .filter(|&(i, r)| *r == PositionRole::Context && m[[i, 1]] > m[[i, 0]])
            .map(|(i, _)| i)
            .collect()
    };
    IndexSets { starts: pick(&probs.start), ends: pick(&probs.end) }
}

/// Pairing rule used by [`predict_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchRule {
    /// Closest start/end wins; output never overlaps.
    #[default]
    Nearest,
    /// Each start, in order, takes the first unconsumed end at or after it.
    /// Can emit overlapping spans; kept for ablation only.
    GreedyConsume,
}

/// Nearest-match pairing. Returns half-open `(start, end + 1)` pairs.
pub fn nearest_match(idx: &IndexSets) -> Vec<(usize, usize)> {
    let (starts, ends) = (&idx.starts, &idx.ends);
    let mut out = Vec::new();
    let mut pending = None;
    let (mut i, mut j) = (0, 0);
    while j < ends.len() {
        if i < starts.len() && starts[i] <= ends[j] {
            pending = Some(starts[i]);
            i += 1;
        } else {
            if let Some(s) = pending.take() {
                out.push((s, ends[j] + 1));
            }
            j += 1;
        }
    }
    out
}

pub fn greedy_consume_match(idx: &IndexSets) -> Vec<(usize, usize)> {
    let mut used = vec![false; idx.ends.len()];
    let mut out = Vec::new();
    for &s in &idx.starts {
        if let Some(k) = (0..idx.ends.len()).find(|&k| !used[k] && idx.ends[k] >= s) {
            used[k] = true;
            out.push((s, idx.ends[k] + 1));
        }
    }
    out
}

pub fn match_indices(idx: &IndexSets, rule: MatchRule) -> Vec<(usize, usize)> {
    match rule {
        MatchRule::Nearest => nearest_match(idx),
        MatchRule::GreedyConsume => greedy_consume_match(idx),
    }
}

/// Spans predicted for one (sentence, entity type), in context coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub source_id: String,
    pub entity_type: String,
    pub spans: Vec<EntitySpan>,
}

/// Anything that can score an instance: a trained model, imported
/// representations with trained heads, or the gold labels themselves.
pub trait ProbabilitySource {
    fn prob_matrices(&self, instance: &MrcInstance) -> Result<ProbMatrices>;
}

/// One-hot probabilities read off the instance's own label vectors.
#[derive(Debug, Clone, Copy, Default)]
pub struct GoldLabels;

impl ProbabilitySource for GoldLabels {
    fn prob_matrices(&self, instance: &MrcInstance) -> Result<ProbMatrices> {
        Ok(gold_probabilities(instance))
    }
}

pub fn gold_probabilities(instance: &MrcInstance) -> ProbMatrices {
    let one_hot = |y: &[u8]| {
        ndarray::Array2::from_shape_fn((y.len(), 2), |(i, c)| if usize::from(y[i]) == c { 1.0 } else { 0.0 })
    };
    ProbMatrices { start: one_hot(&instance.y_start), end: one_hot(&instance.y_end) }
}

pub fn predict<S: ProbabilitySource + ?Sized>(instance: &MrcInstance, source: &S) -> Result<Prediction> {
    predict_with(instance, source, MatchRule::Nearest)
}

pub fn predict_with<S: ProbabilitySource + ?Sized>(
    instance: &MrcInstance,
    source: &S,
    rule: MatchRule,
) -> Result<Prediction> {
    let probs = source.prob_matrices(instance)?;
    Ok(decode_probabilities(instance, &probs, rule))
}

pub fn decode_probabilities(instance: &MrcInstance, probs: &ProbMatrices, rule: MatchRule) -> Prediction {
    let idx = index_sets(probs, &instance.roles);
    let spans = match_indices(&idx, rule)
        .into_iter()
        .map(|(s, e)| EntitySpan::new(s - instance.context_offset, e - instance.context_offset, &instance.entity_type))
        .collect();
    Prediction { source_id: instance.source_id.clone(), entity_type: instance.entity_type.clone(), spans }
}

/// Line-delimited span record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanRecord {
    pub id: String,
    #[serde(rename = "type")]
    pub entity_type: String,
    pub start: usize,
    pub end: usize,
    pub text: String,
}

/// Writes one JSON line per predicted span; `sentences` supplies surface text.
pub fn write_span_records<W: Write>(mut w: W, sentences: &[LabeledSentence], preds: &[Prediction]) -> io::Result<()> {
    let by_id: std::collections::HashMap<&str, &LabeledSentence> = sentences.iter().map(|s| (s.id(), s)).collect();
    for p in preds {
        let tokens = by_id.get(p.source_id.as_str()).map(|s| s.tokens());
        for span in &p.spans {
            let text = tokens.map(|t| span.surface(t).join(" ")).unwrap_or_default();
            let rec = SpanRecord {
                id: p.source_id.clone(),
                entity_type: span.entity_type.clone(),
                start: span.start,
                end: span.end,
                text,
            };
            serde_json::to_writer(&mut w, &rec)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

/// Merges per-type predictions back into IOB2 sentences.
///
/// Spans of different types that overlap cannot be expressed in IOB2; the
/// one starting first (then the longer one) is kept.
pub fn predictions_to_sentences(sentences: &[LabeledSentence], preds: &[Prediction]) -> Vec<LabeledSentence> {
    let mut by_id: std::collections::HashMap<&str, Vec<EntitySpan>> = std::collections::HashMap::new();
    for p in preds {
        by_id.entry(p.source_id.as_str()).or_default().extend(p.spans.iter().cloned());
    }
    sentences
        .iter()
        .map(|s| {
            let mut spans = by_id.remove(s.id()).unwrap_or_default();
            spans.sort_by(|a, b| a.start.cmp(&b.start).then(b.end.cmp(&a.end)));
            let mut kept: Vec<EntitySpan> = Vec::new();
            for span in spans {
                if kept.last().is_none_or(|k| span.start >= k.end) {
                    kept.push(span);
                }
            }
            let tags = spans_to_iob2(&kept, s.len()).expect("kept spans are disjoint and in bounds");
            LabeledSentence::new(s.id(), s.tokens().to_vec(), tags)
        })
        .collect()
}
