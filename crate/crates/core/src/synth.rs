//! Deterministic synthetic corpora with unambiguous lexical entity cues.
//!
//! Each entity type owns a small closed lexicon of one- and two-token
//! mentions that never occur outside an entity, embedded in filler text
//! drawn from a shared vocabulary. Used for fixtures, examples and the
//! learnability checks; nothing here resembles real biomedical text.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, IobTag, LabelSet, LabeledSentence, TagKind};
use crate::error::Result;

const FILLER: &[&str] = &[
    "the",
    "a",
    "of",
    "in",
    "was",
    "were",
    "with",
    "and",
    "after",
    "patients",
    "cells",
    "levels",
    "we",
    "observed",
    "increased",
    "reduced",
    "treatment",
    "response",
    "study",
    "samples",
    "expression",
    "significant",
    "during",
    "mice",
    "showed",
    "between",
    "effect",
    "group",
    "analysis",
    "results",
    "these",
    "data",
    "suggest",
    "role",
];

const CHEMICAL: &[&str] = &[
    "zinc",
    "cisplatin",
    "ethanol",
    "dopamine",
    "lithium",
    "nitric oxide",
    "glucose",
    "heparin",
    "caffeine",
    "retinoic acid",
    "morphine",
    "cocaine",
];

const DISEASE: &[&str] = &[
    "hepatitis",
    "asthma",
    "lung cancer",
    "diabetes",
    "epilepsy",
    "anemia",
    "psoriasis",
    "heart failure",
    "sepsis",
    "leukemia",
    "migraine",
    "obesity",
];

const GENE: &[&str] =
    &["BRCA1", "p53", "HIF-1", "TNF-alpha", "IL-6", "EGFR", "KRAS", "insulin receptor", "MYC", "CD4", "VEGF", "PTEN"];

/// Closed mention lexicon for `entity_type`; unknown types get generated
/// single-token names.
pub fn lexicon(entity_type: &str) -> Vec<String> {
    let fixed = match entity_type {
        "Chemical" => CHEMICAL,
        "Disease" => DISEASE,
        "Gene" | "Gene/Protein" | "protein" => GENE,
        _ => &[],
    };
    if fixed.is_empty() {
        (0..12).map(|i| format!("{}{}", entity_type.to_lowercase().replace(' ', "_"), i)).collect()
    } else {
        fixed.iter().map(|s| s.to_string()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub name: String,
    pub entity_types: Vec<String>,
    /// Sentences per split, in order (`train`, `dev`, `test`, ...).
    pub splits: Vec<(String, usize)>,
    pub seed: u64,
    pub min_len: usize,
    pub max_len: usize,
    /// Entity mentions per sentence are drawn from `0..=max_entities`.
    pub max_entities: usize,
}

impl SynthSpec {
    pub fn single(name: &str, entity_type: &str, train: usize, dev: usize, test: usize, seed: u64) -> Self {
        SynthSpec {
            name: name.into(),
            entity_types: vec![entity_type.into()],
            splits: vec![("train".into(), train), ("dev".into(), dev), ("test".into(), test)],
            seed,
            min_len: 6,
            max_len: 16,
            max_entities: 3,
        }
    }
}

/// Mentions are dealt from a shuffled deck per type, so every lexicon entry
/// appears once before any repeats.
struct Deck {
    lexicon: Vec<String>,
    pending: Vec<usize>,
}

impl Deck {
    fn draw(&mut self, rng: &mut ChaCha8Rng) -> &str {
        if self.pending.is_empty() {
            self.pending = (0..self.lexicon.len()).collect();
            self.pending.shuffle(rng);
        }
        let k = self.pending.pop().expect("refilled");
        &self.lexicon[k]
    }
}

fn sentence(id: String, spec: &SynthSpec, decks: &mut [Deck], rng: &mut ChaCha8Rng) -> LabeledSentence {
    let filler_len = rng.random_range(spec.min_len..=spec.max_len);
    let mut tokens: Vec<String> = (0..filler_len).map(|_| FILLER.choose(rng).expect("non-empty").to_string()).collect();
    let mut tags = vec![IobTag::outside(); filler_len];
    let mentions = rng.random_range(0..=spec.max_entities);
    for _ in 0..mentions {
        let t = rng.random_range(0..spec.entity_types.len());
        let mention = decks[t].draw(rng).to_string();
        // Insert between existing mentions, never inside one.
        let slots: Vec<usize> =
            (0..=tokens.len()).filter(|&i| tags.get(i).is_none_or(|t| t.kind() != TagKind::I)).collect();
        let at = *slots.choose(rng).expect("end slot always present");
        let ty = &spec.entity_types[t];
        for (k, word) in mention.split(' ').enumerate() {
            tokens.insert(at + k, word.to_string());
            tags.insert(at + k, if k == 0 { IobTag::begin(ty.as_str()) } else { IobTag::inside(ty.as_str()) });
        }
    }
    tokens.push(".".into());
    tags.push(IobTag::outside());
    LabeledSentence::new(id, tokens, tags)
}

/// Generates the corpus described by `spec`; identical specs give
/// identical corpora.
pub fn synth_corpus(spec: &SynthSpec) -> Result<Corpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut decks: Vec<Deck> =
        spec.entity_types.iter().map(|t| Deck { lexicon: lexicon(t), pending: Vec::new() }).collect();
    let mut corpus = Corpus::new(spec.name.clone(), LabelSet::new(spec.entity_types.iter().map(String::as_str)));
    for (split, n) in &spec.splits {
        let sentences = (0..*n).map(|i| sentence(format!("{split}-{i}"), spec, &mut decks, &mut rng)).collect();
        corpus.insert_split(split.clone(), sentences)?;
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::is_well_formed;
    use crate::spanconv::iob2_to_spans;

    #[test]
    fn deterministic_and_well_formed() {
        let spec = SynthSpec::single("toy", "Chemical", 25, 10, 5, 3);
        let a = synth_corpus(&spec).unwrap();
        let b = synth_corpus(&spec).unwrap();
        assert_eq!(a.split("train").unwrap(), b.split("train").unwrap());
        assert_eq!(a.split("train").unwrap().len(), 25);
        for s in a.split("train").unwrap() {
            assert!(is_well_formed(&s.tags));
            for span in iob2_to_spans(s) {
                assert!(CHEMICAL.contains(&s.tokens()[span.start..span.end].join(" ").as_str()));
            }
        }
    }

    #[test]
    fn multi_type_uses_every_type() {
        let spec = SynthSpec {
            entity_types: vec!["DNA".into(), "RNA".into(), "protein".into()],
            ..SynthSpec::single("multi", "x", 60, 0, 0, 1)
        };
        let c = synth_corpus(&spec).unwrap();
        let seen: std::collections::BTreeSet<String> =
            c.split("train").unwrap().iter().flat_map(iob2_to_spans).map(|s| s.entity_type).collect();
        assert_eq!(seen.len(), 3);
    }

    #[test]
    fn lexicons_do_not_overlap_filler() {
        for ty in ["Chemical", "Disease", "Gene", "cell_line"] {
            for m in lexicon(ty) {
                assert!(m.split(' ').all(|w| !FILLER.contains(&w)), "{m}");
            }
        }
    }
}
