//! Property tests over the pure pipeline pieces.

use std::collections::BTreeSet;

use proptest::prelude::*;

use grape_ner::corpus::{is_well_formed, parse_conll_str, to_conll_string, Corpus, IobTag, LabelSet, LabeledSentence};
use grape_ner::decode::{greedy_consume_match, nearest_match, IndexSets};
use grape_ner::demos::{density_score, select_grape, DensityConfig};
use grape_ner::eval::Stat;
use grape_ner::fewshot::{draw_sample, SamplePlan};
use grape_ner::spanconv::{iob2_to_spans, spans_to_iob2};

fn raw_tag() -> impl Strategy<Value = &'static str> {
    prop::sample::select(vec!["O", "O", "O", "B-A", "I-A", "B-B", "I-B"])
}

fn conll(tags: &[&str]) -> String {
    tags.iter().enumerate().map(|(i, t)| format!("w{i}\t{t}\n")).collect()
}

fn labels() -> LabelSet {
    LabelSet::new(["A", "B"])
}

fn sentence(id: usize, tags: &[&str]) -> LabeledSentence {
    let parsed = parse_conll_str(&conll(tags), "train", &labels()).unwrap();
    let s = &parsed.sentences[0];
    LabeledSentence::new(format!("train-{id}"), s.tokens().to_vec(), s.tags.clone())
}

fn sorted_set(max: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::btree_set(0..max, 0..12).prop_map(|s| s.into_iter().collect())
}

proptest! {
    #[test]
    fn parsing_always_yields_iob2(tags in prop::collection::vec(raw_tag(), 1..30)) {
        let out = parse_conll_str(&conll(&tags), "train", &labels()).unwrap();
        prop_assert_eq!(out.sentences.len(), 1);
        let s = &out.sentences[0];
        prop_assert!(is_well_formed(&s.tags));
        // Every I-X must follow B-X or I-X.
        let input_ok = tags.iter().enumerate().all(|(i, t)| match t.strip_prefix("I-") {
            Some(ty) => i > 0 && tags[i - 1].len() > 2 && &tags[i - 1][2..] == ty,
            None => true,
        });
        prop_assert_eq!(out.repairs.is_empty(), input_ok);
    }

    #[test]
    fn spans_round_trip(tags in prop::collection::vec(raw_tag(), 1..30)) {
        let out = parse_conll_str(&conll(&tags), "train", &labels()).unwrap();
        let s = &out.sentences[0];
        let spans = iob2_to_spans(s);
        prop_assert_eq!(&spans_to_iob2(&spans, s.len()).unwrap(), &s.tags);
        for w in spans.windows(2) {
            prop_assert!(w[0].end <= w[1].start);
        }
        let again = parse_conll_str(&to_conll_string(&out.sentences), "train", &labels()).unwrap();
        prop_assert_eq!(again.sentences, out.sentences);
        prop_assert!(again.repairs.is_empty());
    }

    #[test]
    fn nearest_match_is_ordered_and_disjoint(starts in sorted_set(20), ends in sorted_set(20)) {
        let pairs = nearest_match(&IndexSets { starts: starts.clone(), ends: ends.clone() });
        for &(s, e) in &pairs {
            prop_assert!(s < e);
            prop_assert!(starts.contains(&s) && ends.contains(&(e - 1)));
        }
        for w in pairs.windows(2) {
            prop_assert!(w[0].1 <= w[1].0);
        }
        prop_assert!(pairs.len() <= starts.len().min(ends.len()));
    }

    #[test]
    fn matchers_agree_on_alternating_indices(n in 0usize..10, gap in 0usize..3) {
        // Well-separated, properly nested starts and ends: both rules recover them.
        let starts: Vec<usize> = (0..n).map(|k| k * 5).collect();
        let ends: Vec<usize> = starts.iter().map(|s| s + gap).collect();
        let idx = IndexSets { starts, ends };
        prop_assert_eq!(nearest_match(&idx), greedy_consume_match(&idx));
        prop_assert_eq!(nearest_match(&idx).len(), n);
    }

    #[test]
    fn grape_choice_has_maximal_density(
        sents in prop::collection::vec(prop::collection::vec(raw_tag(), 1..15), 1..10)
    ) {
        let train: Vec<_> = sents.iter().enumerate().map(|(i, t)| sentence(i, t)).collect();
        let cfg = DensityConfig::default();
        let demo = select_grape(&train, "A", &cfg);
        let best = train.iter().map(|s| density_score(s, "A", &cfg)).fold(0.0, f64::max);
        match demo.sentence {
            Some(s) => prop_assert_eq!(density_score(&s, "A", &cfg), best),
            None => prop_assert_eq!(best, 0.0),
        }
    }

    #[test]
    fn samples_are_disjoint_and_reproducible(seed in any::<u64>(), k in 1usize..20, k_dev in 0usize..15) {
        let mut corpus = Corpus::new("prop", labels());
        let make = |split: &str, n: usize| -> Vec<LabeledSentence> {
            (0..n).map(|i| LabeledSentence::new(format!("{split}-{i}"), vec!["w".into()], vec![IobTag::outside()])).collect()
        };
        corpus.insert_split("train", make("train", 25)).unwrap();
        corpus.insert_split("dev", make("dev", 10)).unwrap();
        corpus.insert_split("test", make("test", 5)).unwrap();
        let plan = SamplePlan::new(seed, k, k_dev);
        let a = draw_sample(&corpus, &plan).unwrap();
        let b = draw_sample(&corpus, &plan).unwrap();
        prop_assert_eq!(&a.train, &b.train);
        prop_assert_eq!(&a.dev, &b.dev);
        prop_assert_eq!(a.train.len(), k);
        prop_assert_eq!(a.dev.len(), k_dev);
        let train_ids: BTreeSet<_> = a.train.iter().map(|s| s.id()).collect();
        prop_assert_eq!(train_ids.len(), k);
        prop_assert!(a.dev.iter().all(|s| !train_ids.contains(s.id()) && !s.id().starts_with("test")));
    }

    #[test]
    fn identical_runs_have_zero_spread(v in 0.0f64..1.0, n in 1usize..8) {
        let s = Stat::of(&vec![v; n]);
        prop_assert_eq!(s.mean, v);
        prop_assert_eq!(s.std, 0.0);
    }
}
