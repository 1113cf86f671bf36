//! IOB2 tags ↔ entity spans, and assembly of MRC instances.
//!
//! An instance lays out `[CLS] context [SEP] demonstration [SEP]` (or
//! `[CLS] context [SEP]` without a demonstration) and carries two binary
//! label vectors: `y_start` marks the first token of each entity of the
//! queried type and `y_end` marks its last token (`end - 1` in half-open
//! coordinates). A single-token entity sets both at the same index.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::{IobTag, LabeledSentence, TagKind};
use crate::demos::Demonstration;
use crate::error::{Error, Result};

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";

/// Half-open token interval `[start, end)` with its entity type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub entity_type: String,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, entity_type: impl Into<String>) -> Self {
        debug_assert!(start < end);
        EntitySpan { start, end, entity_type: entity_type.into() }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn surface<'a>(&self, tokens: &'a [String]) -> &'a [String] {
        &tokens[self.start..self.end]
    }
}

pub fn iob2_to_spans(labeled: &LabeledSentence) -> Vec<EntitySpan> {
    tags_to_spans(&labeled.tags)
}

/// Spans of a well-formed IOB2 tag sequence, sorted by start.
pub fn tags_to_spans(tags: &[IobTag]) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    for (i, tag) in tags.iter().enumerate() {
        match tag.kind() {
            TagKind::I => continue,
            TagKind::B | TagKind::O => {
                if let Some((start, ty)) = open.take() {
                    spans.push(EntitySpan::new(start, i, ty));
                }
                if tag.kind() == TagKind::B {
                    open = tag.entity_type().map(|ty| (i, ty));
                }
            }
        }
    }
    if let Some((start, ty)) = open {
        spans.push(EntitySpan::new(start, tags.len(), ty));
    }
    spans
}

/// Spans filtered to one entity type.
pub fn spans_of_type(labeled: &LabeledSentence, entity_type: &str) -> Vec<EntitySpan> {
    iob2_to_spans(labeled).into_iter().filter(|s| s.entity_type == entity_type).collect()
}

pub fn spans_to_iob2(spans: &[EntitySpan], length: usize) -> Result<Vec<IobTag>> {
    let mut sorted: Vec<&EntitySpan> = spans.iter().collect();
    sorted.sort();
    let mut tags = vec![IobTag::outside(); length];
    let mut covered_to = 0;
    for span in sorted {
        if span.start >= span.end || span.end > length {
            return Err(Error::InvalidSpans(format!(
                "({}, {}, {}) is empty or out of bounds for length {length}",
                span.start, span.end, span.entity_type
            )));
        }
        if span.start < covered_to {
            return Err(Error::InvalidSpans(format!(
                "({}, {}, {}) overlaps a previous span",
                span.start, span.end, span.entity_type
            )));
        }
        tags[span.start] = IobTag::begin(span.entity_type.as_str());
        for tag in &mut tags[span.start + 1..span.end] {
            *tag = IobTag::inside(span.entity_type.as_str());
        }
        covered_to = span.end;
    }
    Ok(tags)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PositionRole {
    Cls,
    Sep,
    Context,
    Demo,
}

impl PositionRole {
    /// Integer code used in the instance record format.
    pub fn code(self) -> u8 {
        match self {
            PositionRole::Cls => 0,
            PositionRole::Sep => 1,
            PositionRole::Context => 2,
            PositionRole::Demo => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => PositionRole::Cls,
            1 => PositionRole::Sep,
            2 => PositionRole::Context,
            3 => PositionRole::Demo,
            _ => return None,
        })
    }
}

/// One (context, demonstration, entity type) triple laid out as a combined sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MrcInstance {
    pub tokens: Vec<String>,
    pub roles: Vec<PositionRole>,
    pub y_start: Vec<u8>,
    pub y_end: Vec<u8>,
    pub entity_type: String,
    pub context_offset: usize,
    pub source_id: String,
}

impl MrcInstance {
    /// `<source id>/<entity type>`; unique per instance within an experiment.
    pub fn id(&self) -> String {
        format!("{}/{}", self.source_id, self.entity_type)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn context_len(&self) -> usize {
        self.roles.iter().filter(|r| **r == PositionRole::Context).count()
    }

    pub fn context_tokens(&self) -> &[String] {
        &self.tokens[self.context_offset..self.context_offset + self.context_len()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssembleOptions {
    /// Label the demonstration's own entities of the queried type.
    pub supervise_demo: bool,
    /// Maximum combined length, special tokens included.
    pub max_len: usize,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        AssembleOptions { supervise_demo: true, max_len: 512 }
    }
}

pub fn assemble_instance(
    context: &LabeledSentence,
    demo: Option<&Demonstration>,
    entity_type: &str,
    opts: AssembleOptions,
) -> Result<MrcInstance> {
    let demo_sentence = demo.and_then(|d| d.sentence.as_ref());
    let demo_len = demo_sentence.map_or(0, LabeledSentence::len);
    let total = context.len() + demo_len + if demo_sentence.is_some() { 3 } else { 2 };
    if total > opts.max_len {
        return Err(Error::InstanceTooLong {
            id: format!("{}/{entity_type}", context.id()),
            len: total,
            max: opts.max_len,
        });
    }

    let mut tokens = Vec::with_capacity(total);
    let mut roles = Vec::with_capacity(total);
    let mut y_start = vec![0u8; total];
    let mut y_end = vec![0u8; total];

    tokens.push(CLS.to_string());
    roles.push(PositionRole::Cls);
    let context_offset = tokens.len();
    tokens.extend(context.tokens().iter().cloned());
    roles.extend(std::iter::repeat_n(PositionRole::Context, context.len()));
    for span in spans_of_type(context, entity_type) {
        y_start[context_offset + span.start] = 1;
        y_end[context_offset + span.end - 1] = 1;
    }
    tokens.push(SEP.to_string());
    roles.push(PositionRole::Sep);

    if let Some(demo) = demo_sentence {
        let demo_offset = tokens.len();
        tokens.extend(demo.tokens().iter().cloned());
        roles.extend(std::iter::repeat_n(PositionRole::Demo, demo.len()));
        if opts.supervise_demo {
            for span in spans_of_type(demo, entity_type) {
                y_start[demo_offset + span.start] = 1;
                y_end[demo_offset + span.end - 1] = 1;
            }
        }
        tokens.push(SEP.to_string());
        roles.push(PositionRole::Sep);
    }
    debug_assert_eq!(tokens.len(), total);

    Ok(MrcInstance {
        tokens,
        roles,
        y_start,
        y_end,
        entity_type: entity_type.to_string(),
        context_offset,
        source_id: context.id().to_string(),
    })
}

/// Line-delimited record of one instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: String,
    #[serde(rename = "type")]
    pub entity_type: String,
    pub source_id: String,
    pub context_offset: usize,
    pub tokens: Vec<String>,
    /// 0 = CLS, 1 = SEP, 2 = CONTEXT, 3 = DEMO.
    pub roles: Vec<u8>,
    pub y_start: Vec<u8>,
    pub y_end: Vec<u8>,
}

impl From<&MrcInstance> for InstanceRecord {
    fn from(inst: &MrcInstance) -> Self {
        InstanceRecord {
            id: inst.id(),
            entity_type: inst.entity_type.clone(),
            source_id: inst.source_id.clone(),
            context_offset: inst.context_offset,
            tokens: inst.tokens.clone(),
            roles: inst.roles.iter().map(|r| r.code()).collect(),
            y_start: inst.y_start.clone(),
            y_end: inst.y_end.clone(),
        }
    }
}

impl TryFrom<InstanceRecord> for MrcInstance {
    type Error = Error;

    fn try_from(rec: InstanceRecord) -> Result<Self> {
        let n = rec.tokens.len();
        if rec.roles.len() != n || rec.y_start.len() != n || rec.y_end.len() != n {
            return Err(Error::InvalidSpans(format!("record `{}` has mismatched vector lengths", rec.id)));
        }
        let roles = rec
            .roles
            .iter()
            .map(|&c| PositionRole::from_code(c))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::InvalidSpans(format!("record `{}` has an unknown role code", rec.id)))?;
        Ok(MrcInstance {
            tokens: rec.tokens,
            roles,
            y_start: rec.y_start,
            y_end: rec.y_end,
            entity_type: rec.entity_type,
            context_offset: rec.context_offset,
            source_id: rec.source_id,
        })
    }
}

pub fn write_instances<W: Write>(mut w: W, instances: &[MrcInstance]) -> io::Result<()> {
    for inst in instances {
        serde_json::to_writer(&mut w, &InstanceRecord::from(inst))?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_instances<R: BufRead>(r: R) -> Result<Vec<MrcInstance>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(i + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: InstanceRecord = serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        out.push(rec.try_into()?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demos::{DemoKind, Demonstration};

    fn sentence(id: &str, text: &str, tags: &str) -> LabeledSentence {
        let tokens = text.split(' ').map(String::from).collect();
        let tags = tags
            .split(' ')
            .map(|t| match t.split_once('-') {
                Some(("B", ty)) => IobTag::begin(ty),
                Some(("I", ty)) => IobTag::inside(ty),
                _ => IobTag::outside(),
            })
            .collect();
        LabeledSentence::new(id, tokens, tags)
    }

    fn example_context() -> LabeledSentence {
        sentence(
            "test-0",
            "Much progress has been successfully achieved in the asymmetric reduction of imines , enamines , olefins , ketones and heteroarenes .",
            "O O O O O O O O O O O B-Chemical O B-Chemical O B-Chemical O B-Chemical O B-Chemical O",
        )
    }

    fn example_demo() -> Demonstration {
        let s = sentence(
            "train-7",
            "Notably , HIF - 1 alpha knockdown blocked zinc - induced astrocyte death .",
            "O O O O O O O O B-Chemical O O O O O",
        );
        Demonstration { kind: DemoKind::Grape, sentence: Some(s), score: 1.0 / 14.0, entity_type: "Chemical".into() }
    }

    #[test]
    fn spans_basic() {
        let s = sentence("a", "x y z", "B-Chemical I-Chemical O");
        assert_eq!(iob2_to_spans(&s), vec![EntitySpan::new(0, 2, "Chemical")]);
        let s = sentence("a", "x y z", "O O O");
        assert!(iob2_to_spans(&s).is_empty());
    }

    #[test]
    fn adjacent_entities_stay_separate() {
        let s = sentence("a", "x y z w", "B-A B-A I-A B-B");
        assert_eq!(
            iob2_to_spans(&s),
            vec![EntitySpan::new(0, 1, "A"), EntitySpan::new(1, 3, "A"), EntitySpan::new(3, 4, "B")]
        );
    }

    #[test]
    fn example_sentence_spans() {
        let s = example_context();
        let spans = iob2_to_spans(&s);
        assert_eq!(spans.len(), 5);
        assert!(spans.iter().all(|sp| sp.len() == 1 && sp.entity_type == "Chemical"));
        let surfaces: Vec<&str> = spans.iter().map(|sp| s.tokens()[sp.start].as_str()).collect();
        assert_eq!(surfaces, ["imines", "enamines", "olefins", "ketones", "heteroarenes"]);
        let starts: Vec<usize> = spans.iter().map(|sp| sp.start).collect();
        assert_eq!(starts, [11, 13, 15, 17, 19]);
    }

    #[test]
    fn spans_to_tags() {
        assert_eq!(spans_to_iob2(&[], 3).unwrap(), vec![IobTag::outside(); 3]);
        assert_eq!(
            spans_to_iob2(&[EntitySpan::new(1, 2, "Disease")], 3).unwrap(),
            vec![IobTag::outside(), IobTag::begin("Disease"), IobTag::outside()]
        );
    }

    #[test]
    fn spans_to_tags_rejects_bad_input() {
        let overlap = [EntitySpan::new(0, 2, "A"), EntitySpan::new(1, 3, "A")];
        assert!(matches!(spans_to_iob2(&overlap, 4), Err(Error::InvalidSpans(_))));
        assert!(matches!(spans_to_iob2(&[EntitySpan::new(2, 4, "A")], 3), Err(Error::InvalidSpans(_))));
    }

    #[test]
    fn single_token_entity_without_demo() {
        let ctx = sentence("train-0", "zinc .", "B-Chemical O");
        let inst = assemble_instance(&ctx, None, "Chemical", AssembleOptions::default()).unwrap();
        assert_eq!(inst.tokens, ["[CLS]", "zinc", ".", "[SEP]"]);
        assert_eq!(inst.y_start, [0, 1, 0, 0]);
        assert_eq!(inst.y_end, [0, 1, 0, 0]);
        assert_eq!(inst.context_offset, 1);
        assert_eq!(inst.roles, [PositionRole::Cls, PositionRole::Context, PositionRole::Context, PositionRole::Sep]);
    }

    #[test]
    fn none_demonstration_matches_no_demo() {
        let ctx = sentence("train-0", "zinc .", "B-Chemical O");
        let none = Demonstration::none("Chemical");
        let a = assemble_instance(&ctx, Some(&none), "Chemical", AssembleOptions::default()).unwrap();
        let b = assemble_instance(&ctx, None, "Chemical", AssembleOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn worked_example() {
        let ctx = example_context();
        let demo = example_demo();
        let inst = assemble_instance(&ctx, Some(&demo), "Chemical", AssembleOptions::default()).unwrap();
        // [CLS] + 21 context + [SEP] + 14 demo + [SEP]
        assert_eq!(inst.len(), 38);
        let ctx_y: Vec<u8> = inst.y_start[1..22].to_vec();
        let expected: Vec<u8> =
            "0 0 0 0 0 0 0 0 0 0 0 1 0 1 0 1 0 1 0 1 0".split(' ').map(|c| c.parse().unwrap()).collect();
        assert_eq!(ctx_y, expected);
        let demo_y: Vec<u8> = inst.y_start[23..37].to_vec();
        assert_eq!(demo_y, [0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0]);
        assert_eq!(inst.tokens[23 + 8], "zinc");
        assert_eq!(inst.y_start, inst.y_end);

        let unsupervised = assemble_instance(
            &ctx,
            Some(&demo),
            "Chemical",
            AssembleOptions { supervise_demo: false, ..Default::default() },
        )
        .unwrap();
        assert!(unsupervised.y_start[23..].iter().all(|&y| y == 0));
    }

    #[test]
    fn other_types_are_filtered() {
        let ctx = sentence("train-0", "lung cancer", "B-Disease I-Disease");
        let inst = assemble_instance(&ctx, None, "Chemical", AssembleOptions::default()).unwrap();
        assert!(inst.y_start.iter().chain(&inst.y_end).all(|&y| y == 0));
    }

    #[test]
    fn too_long_names_the_instance() {
        let ctx = sentence("dev-3", "a b c", "O O O");
        let err = assemble_instance(&ctx, None, "Chemical", AssembleOptions { supervise_demo: true, max_len: 4 })
            .unwrap_err();
        match err {
            Error::InstanceTooLong { id, len, max } => {
                assert_eq!(id, "dev-3/Chemical");
                assert_eq!((len, max), (5, 4));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn record_roundtrip() {
        let inst = assemble_instance(&example_context(), Some(&example_demo()), "Chemical", AssembleOptions::default())
            .unwrap();
        let mut buf = Vec::new();
        write_instances(&mut buf, std::slice::from_ref(&inst)).unwrap();
        let line = String::from_utf8(buf.clone()).unwrap();
        assert!(line.starts_with("{\"id\":\"test-0/Chemical\",\"type\":\"Chemical\""));
        let back = read_instances(buf.as_slice()).unwrap();
        assert_eq!(back, vec![inst]);
    }
}
