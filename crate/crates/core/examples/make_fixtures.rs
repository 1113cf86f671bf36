//! Regenerates the synthetic fixture corpora under `tests/fixtures/`.
//!
//! ```sh
//! cargo run --example make_fixtures -- crates/core/tests/fixtures
//! ```
//!
//! The chemical corpus is written with bare `B`/`I` tags, as some
//! single-type benchmark files are.

use std::fs;
use std::path::PathBuf;

use grape_ner::corpus::to_conll_string;
use grape_ner::synth::{synth_corpus, SynthSpec};

fn main() -> grape_ner::Result<()> {
    let root: PathBuf = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| "tests/fixtures".into());
    let specs = [
        ("chemical", vec!["Chemical"], 11),
        ("disease", vec!["Disease"], 12),
        ("gene", vec!["Gene"], 13),
        ("multi", vec!["DNA", "RNA", "protein", "cell_line", "cell_type"], 14),
    ];
    for (name, types, seed) in specs {
        let spec = SynthSpec {
            name: name.into(),
            entity_types: types.iter().map(|t| t.to_string()).collect(),
            splits: vec![("train".into(), 200), ("dev".into(), 120), ("test".into(), 60)],
            seed,
            min_len: 6,
            max_len: 18,
            max_entities: 3,
        };
        let corpus = synth_corpus(&spec)?;
        let dir = root.join(name);
        fs::create_dir_all(&dir).map_err(|e| grape_ner::Error::Io { path: dir.clone(), source: e })?;
        for split in ["train", "dev", "test"] {
            let mut text = to_conll_string(corpus.split(split)?);
            if name == "chemical" {
                text = text.replace("\tB-Chemical", "\tB").replace("\tI-Chemical", "\tI");
            }
            let path = dir.join(format!("{split}.conll"));
            fs::write(&path, text).map_err(|e| grape_ner::Error::Io { path: path.clone(), source: e })?;
        }
        println!("{}: {} types", dir.display(), types.len());
    }
    Ok(())
}
