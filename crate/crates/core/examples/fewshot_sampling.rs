//! Draws seeded k-shot samples from the train+dev pool and shows that a
//! seed always reproduces the same sentences.
//!
//! ```sh
//! cargo run --example fewshot_sampling -- 25 100
//! ```

use grape_ner::cli::{load_dataset, DatasetConfig};
use grape_ner::fewshot::{draw_sample, SamplePlan};

fn main() -> grape_ner::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("a count"));
    let k = args.next().unwrap_or(25);
    let k_dev = args.next().unwrap_or(100);
    let dir = std::path::Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/disease"));
    let ds = DatasetConfig {
        name: "disease".into(),
        entity_types: vec!["Disease".into()],
        train: dir.join("train.conll"),
        dev: dir.join("dev.conll"),
        test: dir.join("test.conll"),
    };
    let (corpus, _) = load_dataset(&ds)?;
    for seed in 1..=5 {
        let plan = SamplePlan::new(seed, k, k_dev);
        let sample = draw_sample(&corpus, &plan)?;
        assert_eq!(sample.train, draw_sample(&corpus, &plan)?.train);
        let first: Vec<&str> = sample.train.iter().take(4).map(|s| s.id()).collect();
        println!("seed {seed}: {} train, {} dev; first train ids {first:?}", sample.train.len(), sample.dev.len());
    }
    Ok(())
}
