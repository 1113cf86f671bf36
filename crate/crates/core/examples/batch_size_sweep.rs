//! Sweeps the training batch size on a synthetic corpus and prints the
//! F1 for each size.
//!
//! ```sh
//! cargo run --release --example batch_size_sweep -- 30
//! ```

use std::fs;

use grape_ner::cli::{cmd_run, DatasetConfig, ExperimentConfig};
use grape_ner::corpus::to_conll_string;
use grape_ner::model::ModelConfig;
use grape_ner::synth::{synth_corpus, SynthSpec};

fn main() -> grape_ner::Result<()> {
    let epochs = std::env::args().nth(1).map_or(30, |a| a.parse().expect("epochs"));
    let dir = tempfile::tempdir().map_err(|e| grape_ner::Error::io("tempdir", e))?;
    let corpus = synth_corpus(&SynthSpec::single("synthetic", "Chemical", 75, 75, 50, 10))?;
    for split in ["train", "dev", "test"] {
        let path = dir.path().join(format!("{split}.conll"));
        fs::write(&path, to_conll_string(corpus.split(split)?)).map_err(|e| grape_ner::Error::io(&path, e))?;
    }
    let cfg = ExperimentConfig {
        output_dir: dir.path().join("out"),
        shots: vec![25],
        k_dev: 50,
        batch_sizes: vec![1, 2, 4, 6, 8],
        model: ModelConfig { epochs, ..ModelConfig::default() },
        datasets: vec![DatasetConfig {
            name: "synthetic".into(),
            entity_types: vec!["Chemical".into()],
            train: dir.path().join("train.conll"),
            dev: dir.path().join("dev.conll"),
            test: dir.path().join("test.conll"),
        }],
        ..ExperimentConfig::default()
    };
    let out = cmd_run(&cfg)?;
    println!("batch size\tF1 (%)");
    for (key, summary) in out.report.summaries() {
        println!("{}\t{}", key.batch_size, summary.f1);
    }
    Ok(())
}
