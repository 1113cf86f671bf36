//! Seeded few-shot sampling of `Train_k` and `Dev_k` from a sentence pool.
//!
//! The generator is ChaCha8 keyed with `SHA-256(corpus name ‖ 0x00 ‖ seed as
//! u64 little-endian)`. Indices are drawn with a partial Fisher–Yates shuffle
//! over the pool in document order; each bounded draw takes `next_u64` and
//! rejects values above the largest multiple of the bound. The first
//! `k_train` picks form the training sample and the next `k_dev` the
//! development sample, so the two are disjoint.

use std::fs;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{to_conll_string, Corpus, LabeledSentence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub seed: u64,
    pub k_train: usize,
    pub k_dev: usize,
    /// Splits concatenated, in order, to form the pool.
    pub pool: Vec<String>,
}

impl SamplePlan {
    /// Samples from the union of the train and dev splits.
    pub fn new(seed: u64, k_train: usize, k_dev: usize) -> Self {
        SamplePlan { seed, k_train, k_dev, pool: vec!["train".into(), "dev".into()] }
    }

    pub fn with_pool<I, S>(mut self, splits: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.pool = splits.into_iter().map(Into::into).collect();
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub train: Vec<LabeledSentence>,
    pub dev: Vec<LabeledSentence>,
}

pub fn sampler_rng(corpus_name: &str, seed: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(corpus_name.as_bytes());
    hasher.update([0u8]);
    hasher.update(seed.to_le_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(key)
}

/// Uniform integer in `0..bound` by rejection sampling.
pub fn uniform_below<R: RngCore>(rng: &mut R, bound: u64) -> u64 {
    assert!(bound > 0);
    let zone = u64::MAX - (u64::MAX - bound + 1) % bound;
    loop {
        let x = rng.next_u64();
        if x <= zone {
            return x % bound;
        }
    }
}

/// The pool the plan samples from, in document order.
pub fn pool<'a>(corpus: &'a Corpus, plan: &SamplePlan) -> Result<Vec<&'a LabeledSentence>> {
    let mut out = Vec::new();
    for split in &plan.pool {
        out.extend(corpus.split(split)?);
    }
    Ok(out)
}

pub fn draw_sample(corpus: &Corpus, plan: &SamplePlan) -> Result<Sample> {
    if plan.k_train == 0 {
        return Err(Error::Sample("k_train must be at least 1".into()));
    }
    let pool = pool(corpus, plan)?;
    let wanted = plan.k_train + plan.k_dev;
    if wanted > pool.len() {
        return Err(Error::Sample(format!(
            "pool {:?} of `{}` has {} sentences, plan needs {wanted}",
            plan.pool,
            corpus.name,
            pool.len()
        )));
    }

    let mut rng = sampler_rng(&corpus.name, plan.seed);
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    for i in 0..wanted {
        let j = i + uniform_below(&mut rng, (idx.len() - i) as u64) as usize;
        idx.swap(i, j);
    }
    let take = |range: std::ops::Range<usize>| idx[range].iter().map(|&i| pool[i].clone()).collect();
    Ok(Sample { train: take(0..plan.k_train), dev: take(plan.k_train..wanted) })
}

/// Provenance record written alongside a persisted sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub corpus: String,
    pub seed: u64,
    pub k_train: usize,
    pub k_dev: usize,
    pub pool: Vec<String>,
    pub train_ids: Vec<String>,
    pub dev_ids: Vec<String>,
    /// SHA-256 over the train file followed by the dev file.
    pub content_hash: String,
}

/// Writes `train.conll`, `dev.conll` and `sample.json` under `dir`.
pub fn write_sample(dir: &Path, corpus_name: &str, plan: &SamplePlan, sample: &Sample) -> Result<SampleManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let train = to_conll_string(&sample.train);
    let dev = to_conll_string(&sample.dev);
    let mut hasher = Sha256::new();
    hasher.update(train.as_bytes());
    hasher.update(dev.as_bytes());
    let manifest = SampleManifest {
        corpus: corpus_name.to_string(),
        seed: plan.seed,
        k_train: plan.k_train,
        k_dev: plan.k_dev,
        pool: plan.pool.clone(),
        train_ids: sample.train.iter().map(|s| s.id().to_string()).collect(),
        dev_ids: sample.dev.iter().map(|s| s.id().to_string()).collect(),
        content_hash: hex::encode(hasher.finalize()),
    };
    for (name, body) in [("train.conll", train), ("dev.conll", dev)] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(path, e))?;
    }
    let path = dir.join("sample.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::corpus::{IobTag, LabelSet};

    fn corpus(n_train: usize, n_dev: usize) -> Corpus {
        let mk = |split: &str, n: usize| {
            (0..n)
                .map(|i| LabeledSentence::new(format!("{split}-{i}"), vec![format!("w{i}")], vec![IobTag::outside()]))
                .collect()
        };
        let mut c = Corpus::new("toy", LabelSet::new(["Chemical"]));
        c.insert_split("train", mk("train", n_train)).unwrap();
        c.insert_split("dev", mk("dev", n_dev)).unwrap();
        c.insert_split("test", mk("test", 10)).unwrap();
        c
    }

    fn ids(s: &[LabeledSentence]) -> Vec<&str> {
        s.iter().map(LabeledSentence::id).collect()
    }

    #[test]
    fn sizes_and_disjointness() {
        let c = corpus(300, 60);
        let s = draw_sample(&c, &SamplePlan::new(1, 25, 100)).unwrap();
        assert_eq!(s.train.len(), 25);
        assert_eq!(s.dev.len(), 100);
        let all: HashSet<&str> = ids(&s.train).into_iter().chain(ids(&s.dev)).collect();
        assert_eq!(all.len(), 125);
        assert!(all.iter().all(|id| !id.starts_with("test")));
    }

    #[test]
    fn deterministic() {
        let c = corpus(300, 60);
        let plan = SamplePlan::new(3, 25, 100);
        assert_eq!(draw_sample(&c, &plan).unwrap(), draw_sample(&c, &plan).unwrap());
    }

    #[test]
    fn whole_pool() {
        let c = corpus(7, 3);
        let s = draw_sample(&c, &SamplePlan::new(5, 10, 0)).unwrap();
        let mut got = ids(&s.train);
        got.sort();
        let mut want: Vec<String> =
            (0..7).map(|i| format!("train-{i}")).chain((0..3).map(|i| format!("dev-{i}"))).collect();
        want.sort();
        assert_eq!(got, want);
        assert!(s.dev.is_empty());
    }

    #[test]
    fn seeds_differ() {
        let c = corpus(300, 60);
        let samples: HashSet<Vec<String>> = (1..=5)
            .map(|seed| {
                draw_sample(&c, &SamplePlan::new(seed, 25, 100))
                    .unwrap()
                    .train
                    .iter()
                    .map(|s| s.id().to_string())
                    .collect()
            })
            .collect();
        assert!(samples.len() >= 2);
    }

    #[test]
    fn corpus_name_changes_sample() {
        let a = corpus(300, 0);
        let mut b = corpus(300, 0);
        b.name = "other".into();
        let plan = SamplePlan::new(1, 25, 0).with_pool(["train"]);
        assert_ne!(draw_sample(&a, &plan).unwrap(), draw_sample(&b, &plan).unwrap());
    }

    #[test]
    fn pool_too_small() {
        let c = corpus(10, 0);
        assert!(matches!(draw_sample(&c, &SamplePlan::new(1, 25, 100)), Err(Error::Sample(_))));
        assert!(matches!(draw_sample(&c, &SamplePlan::new(1, 0, 0)), Err(Error::Sample(_))));
        let bad_pool = SamplePlan::new(1, 1, 0).with_pool(["nope"]);
        assert!(matches!(draw_sample(&c, &bad_pool), Err(Error::UnknownSplit(_))));
    }

    #[test]
    fn uniform_below_stays_in_range() {
        let mut rng = sampler_rng("x", 0);
        for bound in [1u64, 2, 3, 7, 1000, u64::MAX] {
            for _ in 0..100 {
                assert!(uniform_below(&mut rng, bound) < bound);
            }
        }
    }

    #[test]
    fn persisted_sample_has_manifest() {
        let c = corpus(30, 10);
        let plan = SamplePlan::new(2, 5, 5);
        let s = draw_sample(&c, &plan).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = write_sample(dir.path(), &c.name, &plan, &s).unwrap();
        assert_eq!(m.train_ids.len(), 5);
        assert_eq!(m.content_hash.len(), 64);
        let text = std::fs::read_to_string(dir.path().join("sample.json")).unwrap();
        let back: SampleManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }
}
