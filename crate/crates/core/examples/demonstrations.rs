//! Compares the entity-dense, most-popular and empty demonstrations for
//! every entity type of the multi-type fixture.
//!
//! ```sh
//! cargo run --example demonstrations
//! ```

use std::fs;

use grape_ner::corpus::{parse_conll_str, LabelSet};
use grape_ner::demos::{select, write_audit, DemoKind, DensityConfig};

fn main() -> grape_ner::Result<()> {
    let types = ["DNA", "RNA", "protein", "cell_line", "cell_type"];
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/multi/train.conll");
    let text = fs::read_to_string(path).map_err(|e| grape_ner::Error::io(path, e))?;
    let train = parse_conll_str(&text, "train", &LabelSet::new(types))?.sentences;
    let cfg = DensityConfig::default();
    for kind in [DemoKind::Grape, DemoKind::Popular, DemoKind::None] {
        println!("== {kind}");
        let demos: Vec<_> = types.iter().map(|t| select(kind, &train, t, &cfg)).collect();
        write_audit(std::io::stdout(), &demos).map_err(|e| grape_ner::Error::io("stdout", e))?;
    }
    Ok(())
}
