//! Trains only the span heads over externally computed representations.
//!
//! The representations here come from the built-in encoder and are written
//! to an `MRCH` file and read back, standing in for matrices exported from
//! any other encoder with one row per position.
//!
//! ```sh
//! cargo run --release --example import_representations
//! ```

use std::collections::BTreeMap;
use std::sync::Arc;

use grape_ner::corpus::LabeledSentence;
use grape_ner::demos::{select, DemoKind, DensityConfig};
use grape_ner::model::{
    evaluate, export_representations, import_representations, train_heads, Model, ModelConfig, RepresentationSet, Vocab,
};
use grape_ner::spanconv::{assemble_instance, AssembleOptions, MrcInstance};
use grape_ner::synth::{synth_corpus, SynthSpec};

fn main() -> grape_ner::Result<()> {
    let corpus = synth_corpus(&SynthSpec::single("toy", "Gene", 25, 100, 0, 3))?;
    let (train_set, dev_set) = (corpus.split("train")?, corpus.split("dev")?);
    let demo = select(DemoKind::Grape, train_set, "Gene", &DensityConfig::default());
    let build = |ss: &[LabeledSentence]| -> grape_ner::Result<Vec<MrcInstance>> {
        ss.iter().map(|s| assemble_instance(s, Some(&demo), "Gene", AssembleOptions::default())).collect()
    };
    let (tr, dv) = (build(train_set)?, build(dev_set)?);

    // A frozen, randomly initialised encoder plays the external model.
    let all: Vec<MrcInstance> = tr.iter().chain(&dv).cloned().collect();
    let encoder = Model::new(ModelConfig { dropout: 0.0, ..ModelConfig::default() }, Vocab::from_instances(&all), 7)?;
    let mut matrices = BTreeMap::new();
    for inst in &all {
        matrices.insert(inst.id(), encoder.encode(inst)?.h.mapv(|v| v as f32));
    }
    let dir = tempfile::tempdir().map_err(|e| grape_ner::Error::io("tempdir", e))?;
    let path = dir.path().join("reps.mrch");
    export_representations(&path, &RepresentationSet { matrices })?;

    let reps = Arc::new(import_representations(&path, &all)?);
    println!("imported {} matrices of width {}", reps.len(), reps.width().unwrap_or(0));
    let cfg = ModelConfig { epochs: 60, learning_rate: 1e-2, ..ModelConfig::default() };
    let out = train_heads(reps, &tr, &dv, &cfg, 1)?;
    for r in out.log.iter().filter(|r| r.epoch == 1 || r.epoch % 10 == 0) {
        println!("epoch {:>3}  loss {:.4}  dev F1 {:.3}", r.epoch, r.mean_loss, r.dev_f1);
    }
    println!("heads-only dev F1 {:.3}", evaluate(&out.model, &dv)?.micro.f1());
    Ok(())
}
