//! Parses a CoNLL corpus (default: the chemical fixture), reports repairs
//! and per-split statistics, and checks the IOB2 ↔ span round trip.
//!
//! ```sh
//! cargo run --example parse_and_stats -- path/to/dir Chemical
//! ```

use std::path::PathBuf;

use grape_ner::cli::{load_dataset, DatasetConfig};
use grape_ner::corpus::corpus_stats;
use grape_ner::spanconv::{iob2_to_spans, spans_to_iob2};

fn main() -> grape_ner::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/chemical")));
    let types: Vec<String> = args.collect();
    let ds = DatasetConfig {
        name: dir.file_name().map_or("corpus".into(), |n| n.to_string_lossy().into_owned()),
        entity_types: if types.is_empty() { vec!["Chemical".into()] } else { types },
        train: dir.join("train.conll"),
        dev: dir.join("dev.conll"),
        test: dir.join("test.conll"),
    };
    let (corpus, repairs) = load_dataset(&ds)?;
    println!("{} repair(s)", repairs.len());
    for r in repairs.iter().take(5) {
        println!("  {r}");
    }
    println!("split\tsentences\ttokens\tentities\tmean");
    for split in ["train", "dev", "test"] {
        let s = corpus_stats(&corpus, split)?;
        println!("{}\t{}\t{}\t{}\t{:.2}", s.split, s.sentences, s.tokens, s.entities, s.mean_entities);
        for sentence in corpus.split(split)? {
            assert_eq!(spans_to_iob2(&iob2_to_spans(sentence), sentence.len())?, sentence.tags);
        }
    }
    println!("span round trip: ok");
    Ok(())
}
