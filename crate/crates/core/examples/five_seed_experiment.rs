//! Runs the full five-seed protocol on two fixture corpora, comparing
//! demonstration kinds at 25 and 50 shots, and prints the result table.
//!
//! ```sh
//! cargo run --release --example five_seed_experiment -- out 20
//! ```

use std::path::{Path, PathBuf};

use grape_ner::cli::{cmd_run, DatasetConfig, ExperimentConfig};
use grape_ner::demos::DemoKind;
use grape_ner::model::ModelConfig;

fn fixture(name: &str, types: &[&str]) -> DatasetConfig {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    DatasetConfig {
        name: name.into(),
        entity_types: types.iter().map(|t| t.to_string()).collect(),
        train: dir.join("train.conll"),
        dev: dir.join("dev.conll"),
        test: dir.join("test.conll"),
    }
}

fn main() -> grape_ner::Result<()> {
    let mut args = std::env::args().skip(1);
    let output_dir = args.next().map_or_else(|| std::env::temp_dir().join("grape-ner-five-seed"), PathBuf::from);
    let epochs = args.next().map_or(20, |a| a.parse().expect("epochs"));
    let cfg = ExperimentConfig {
        output_dir,
        demos: vec![DemoKind::Grape, DemoKind::Popular, DemoKind::None],
        model: ModelConfig { epochs, learning_rate: 1e-3, ..ModelConfig::default() },
        datasets: vec![fixture("chemical", &["Chemical"]), fixture("disease", &["Disease"])],
        ..ExperimentConfig::default()
    };
    let out = cmd_run(&cfg)?;
    print!("{}", out.report.table());
    println!("{} runs ({} failed) under {}", out.manifests.len(), out.failed(), out.root.display());
    Ok(())
}
