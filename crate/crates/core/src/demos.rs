//! Demonstration selection from a training split.
//!
//! * grape: the sentence with the highest entity density
//!   `count^u / len^v`, restricted to sentences of at most `max_len` words.
//! * popular: a sentence containing the most frequent entity surface form.
//!
//! Both count only entities of the queried type, so a multi-type corpus gets
//! one demonstration per type. Ties are broken deterministically (see each
//! selector) and sentence ids are compared in natural order, so `train-9`
//! sorts before `train-10`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::LabeledSentence;
use crate::error::{Error, Result};
use crate::spanconv::spans_of_type;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemoKind {
    Grape,
    Popular,
    None,
}

impl DemoKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DemoKind::Grape => "grape",
            DemoKind::Popular => "popular",
            DemoKind::None => "none",
        }
    }
}

impl fmt::Display for DemoKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DemoKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grape" => Ok(DemoKind::Grape),
            "popular" => Ok(DemoKind::Popular),
            "none" => Ok(DemoKind::None),
            other => Err(Error::Config(format!("unknown demonstration kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub kind: DemoKind,
    /// Absent for `DemoKind::None` and for degenerate selections.
    pub sentence: Option<LabeledSentence>,
    /// Density for grape, surface-form frequency for popular.
    pub score: f64,
    pub entity_type: String,
}

impl Demonstration {
    pub fn none(entity_type: impl Into<String>) -> Self {
        Demonstration { kind: DemoKind::None, sentence: None, score: 0.0, entity_type: entity_type.into() }
    }

    pub fn len(&self) -> usize {
        self.sentence.as_ref().map_or(0, LabeledSentence::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityConfig {
    pub u: f64,
    pub v: f64,
    pub max_len: usize,
}

impl DensityConfig {
    pub fn new(u: f64, v: f64, max_len: usize) -> Result<Self> {
        let cfg = DensityConfig { u, v, max_len };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.u > 0.0 && self.u.is_finite() && self.v > 0.0 && self.v.is_finite()) {
            return Err(Error::Config(format!("density exponents must be positive, got u={} v={}", self.u, self.v)));
        }
        if self.max_len == 0 {
            return Err(Error::Config("demonstration max_len must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig { u: 3.0, v: 1.0, max_len: 100 }
    }
}

pub fn density(count: usize, len: usize, cfg: &DensityConfig) -> f64 {
    if count == 0 {
        return 0.0;
    }
    (count as f64).powf(cfg.u) / (len as f64).powf(cfg.v)
}

pub fn density_score(sentence: &LabeledSentence, entity_type: &str, cfg: &DensityConfig) -> f64 {
    density(spans_of_type(sentence, entity_type).len(), sentence.len(), cfg)
}

/// Natural order on `<prefix>-<index>` ids; falls back to plain string order.
pub fn compare_sentence_ids(a: &str, b: &str) -> Ordering {
    fn split(id: &str) -> (&str, Option<u64>) {
        match id.rsplit_once('-') {
            Some((prefix, n)) => match n.parse() {
                Ok(n) => (prefix, Some(n)),
                Err(_) => (id, None),
            },
            None => (id, None),
        }
    }
    let (pa, na) = split(a);
    let (pb, nb) = split(b);
    pa.cmp(pb).then(na.cmp(&nb)).then_with(|| a.cmp(b))
}

/// Highest density among sentences no longer than `cfg.max_len`.
///
/// Ties: more entities first, then the lower sentence id.
pub fn select_grape(train: &[LabeledSentence], entity_type: &str, cfg: &DensityConfig) -> Demonstration {
    let best = train
        .iter()
        .filter(|s| s.len() <= cfg.max_len)
        .map(|s| {
            let count = spans_of_type(s, entity_type).len();
            (s, count, density(count, s.len(), cfg))
        })
        .filter(|&(_, count, _)| count > 0)
        .min_by(|a, b| b.2.total_cmp(&a.2).then(b.1.cmp(&a.1)).then_with(|| compare_sentence_ids(a.0.id(), b.0.id())));
    match best {
        Some((s, _, score)) => Demonstration {
            kind: DemoKind::Grape,
            sentence: Some(s.clone()),
            score,
            entity_type: entity_type.to_string(),
        },
        None => Demonstration::none(entity_type),
    }
}

/// Surface-form frequencies of `entity_type` entities, with the sentences containing each form.
pub fn surface_forms<'a>(
    train: &'a [LabeledSentence],
    entity_type: &str,
) -> BTreeMap<Vec<String>, (usize, Vec<&'a LabeledSentence>)> {
    let mut forms: BTreeMap<Vec<String>, (usize, Vec<&LabeledSentence>)> = BTreeMap::new();
    for s in train {
        for span in spans_of_type(s, entity_type) {
            let entry = forms.entry(span.surface(s.tokens()).to_vec()).or_default();
            entry.0 += 1;
            if !entry.1.iter().any(|o| o.id() == s.id()) {
                entry.1.push(s);
            }
        }
    }
    forms
}

/// A sentence containing the most frequent surface form of `entity_type`.
///
/// Forms are ranked by frequency, then lexicographically; within a form the
/// lowest sentence id wins. Sentences longer than `max_len` are skipped, and
/// a form with no short enough sentence gives way to the next-ranked form.
pub fn select_popular(train: &[LabeledSentence], entity_type: &str, max_len: usize) -> Demonstration {
    let mut ranked: Vec<_> = surface_forms(train, entity_type).into_iter().collect();
    // BTreeMap iteration is already lexicographic; a stable sort keeps that as the tie-break.
    ranked.sort_by_key(|entry| std::cmp::Reverse(entry.1 .0));
    for (_, (freq, sentences)) in ranked {
        let pick =
            sentences.into_iter().filter(|s| s.len() <= max_len).min_by(|a, b| compare_sentence_ids(a.id(), b.id()));
        if let Some(s) = pick {
            return Demonstration {
                kind: DemoKind::Popular,
                sentence: Some(s.clone()),
                score: freq as f64,
                entity_type: entity_type.to_string(),
            };
        }
    }
    Demonstration::none(entity_type)
}

pub fn select(kind: DemoKind, train: &[LabeledSentence], entity_type: &str, cfg: &DensityConfig) -> Demonstration {
    match kind {
        DemoKind::Grape => select_grape(train, entity_type, cfg),
        DemoKind::Popular => select_popular(train, entity_type, cfg.max_len),
        DemoKind::None => Demonstration::none(entity_type),
    }
}

/// Writes the human-readable audit of demonstration choices.
pub fn write_audit<W: Write>(mut w: W, demos: &[Demonstration]) -> io::Result<()> {
    for d in demos {
        writeln!(w, "type:     {}", d.entity_type)?;
        writeln!(w, "kind:     {}", d.kind)?;
        writeln!(w, "score:    {:.6}", d.score)?;
        match &d.sentence {
            Some(s) => {
                writeln!(w, "sentence: {}", s.id())?;
                writeln!(w, "length:   {}", s.len())?;
                writeln!(w, "text:     {}", s.text())?;
            }
            None => writeln!(w, "sentence: -")?,
        }
        writeln!(w)?;
    }
    Ok(())
}
