//! Entity-level exact-match scoring and cross-seed aggregation.
//!
//! A predicted span is a true positive only if a gold span with the same
//! sentence, start, end and type exists; each gold span absorbs at most one
//! prediction. Zero denominators give 0. Standard deviations are population
//! (divide by N).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::LabeledSentence;
use crate::decode::Prediction;
use crate::error::{Error, Result};
use crate::spanconv::{iob2_to_spans, EntitySpan};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }

    pub fn prf(&self) -> Prf {
        Prf { precision: self.precision(), recall: self.recall(), f1: self.f1() }
    }

    fn add(&mut self, other: &Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Counts pooled over types.
    #[default]
    Micro,
    /// Unweighted mean of per-type scores.
    Macro,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_type: BTreeMap<String, Counts>,
    pub micro: Counts,
}

impl EvalReport {
    pub fn prf(&self, averaging: Averaging) -> Prf {
        match averaging {
            Averaging::Micro => self.micro.prf(),
            Averaging::Macro => {
                if self.per_type.is_empty() {
                    return Prf::default();
                }
                let n = self.per_type.len() as f64;
                let mut p = 0.0;
                let mut r = 0.0;
                let mut f = 0.0;
                for c in self.per_type.values() {
                    p += c.precision();
                    r += c.recall();
                    f += c.f1();
                }
                Prf { precision: p / n, recall: r / n, f1: f / n }
            }
        }
    }
}

/// Gold spans per sentence id, plus the label set they are scored over.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GoldStandard {
    spans: BTreeMap<String, Vec<EntitySpan>>,
    types: BTreeSet<String>,
}

impl GoldStandard {
    pub fn from_sentences<'a, I, T>(sentences: &[LabeledSentence], types: I) -> Self
    where
        I: IntoIterator<Item = T>,
        T: AsRef<str> + 'a,
    {
        GoldStandard {
            spans: sentences.iter().map(|s| (s.id().to_string(), iob2_to_spans(s))).collect(),
            types: types.into_iter().map(|t| t.as_ref().to_string()).collect(),
        }
    }

    /// Gold built from already-decoded gold predictions (e.g. from instance labels).
    pub fn from_predictions(preds: &[Prediction]) -> Self {
        let mut gold = GoldStandard::default();
        for p in preds {
            gold.types.insert(p.entity_type.clone());
            gold.spans.entry(p.source_id.clone()).or_default().extend(p.spans.iter().cloned());
        }
        gold
    }

    pub fn types(&self) -> impl Iterator<Item = &str> {
        self.types.iter().map(String::as_str)
    }
}

pub fn score(gold: &GoldStandard, preds: &[Prediction]) -> Result<EvalReport> {
    let mut predicted: BTreeMap<(&str, &str), Vec<&EntitySpan>> = BTreeMap::new();
    for p in preds {
        if !gold.spans.contains_key(&p.source_id) {
            return Err(Error::UnknownSentence(p.source_id.clone()));
        }
        if !gold.types.contains(&p.entity_type) {
            return Err(Error::UnknownEntityType(p.entity_type.clone()));
        }
        predicted.entry((p.source_id.as_str(), p.entity_type.as_str())).or_default().extend(p.spans.iter());
    }

    let mut report = EvalReport::default();
    for ty in &gold.types {
        let mut counts = Counts::default();
        for (id, spans) in &gold.spans {
            let mut remaining: Vec<&EntitySpan> = spans.iter().filter(|s| &s.entity_type == ty).collect();
            let pred = predicted.get(&(id.as_str(), ty.as_str())).map(Vec::as_slice).unwrap_or_default();
            for p in pred {
                if let Some(k) = remaining.iter().position(|g| g.start == p.start && g.end == p.end) {
                    remaining.swap_remove(k);
                    counts.tp += 1;
                } else {
                    counts.fp += 1;
                }
            }
            counts.fn_ += remaining.len();
        }
        report.micro.add(&counts);
        report.per_type.insert(ty.clone(), counts);
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        if values.is_empty() {
            return Stat::default();
        }
        let n = values.len() as f64;
        // Offsetting by the minimum keeps identical runs exact.
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = (min + values.iter().map(|v| v - min).sum::<f64>() / n).clamp(min, max);
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Stat { mean, std: var.sqrt() }
    }

    /// Percent with one decimal, e.g. `61.7±2.1`.
    pub fn percent(&self) -> String {
        format!("{:.1}±{:.1}", self.mean * 100.0, self.std * 100.0)
    }
}

impl fmt::Display for Stat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.percent())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: Vec<Prf>,
    pub precision: Stat,
    pub recall: Stat,
    pub f1: Stat,
}

pub fn aggregate(runs: &[Prf]) -> Summary {
    let col = |f: fn(&Prf) -> f64| runs.iter().map(f).collect::<Vec<_>>();
    Summary {
        runs: runs.to_vec(),
        precision: Stat::of(&col(|r| r.precision)),
        recall: Stat::of(&col(|r| r.recall)),
        f1: Stat::of(&col(|r| r.f1)),
    }
}

pub fn aggregate_reports(reports: &[EvalReport], averaging: Averaging) -> Summary {
    aggregate(&reports.iter().map(|r| r.prf(averaging)).collect::<Vec<_>>())
}
