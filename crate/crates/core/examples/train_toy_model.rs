//! Trains the built-in encoder on a synthetic single-type corpus, prints
//! the learning curve, saves a checkpoint and reloads it.
//!
//! ```sh
//! cargo run --release --example train_toy_model -- 200 3e-5
//! ```

use grape_ner::corpus::LabeledSentence;
use grape_ner::demos::{select, DemoKind, DensityConfig};
use grape_ner::model::{evaluate, load_checkpoint, save_checkpoint, train, ModelConfig};
use grape_ner::spanconv::{assemble_instance, AssembleOptions, MrcInstance};
use grape_ner::synth::{synth_corpus, SynthSpec};

fn main() -> grape_ner::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map_or(200, |a| a.parse().expect("epochs"));
    let learning_rate = args.next().map_or(3e-5, |a| a.parse().expect("learning rate"));

    let corpus = synth_corpus(&SynthSpec::single("toy", "Chemical", 25, 100, 0, 1))?;
    let (train_set, dev_set) = (corpus.split("train")?, corpus.split("dev")?);
    let demo = select(DemoKind::Grape, train_set, "Chemical", &DensityConfig::default());
    let build = |ss: &[LabeledSentence]| -> grape_ner::Result<Vec<MrcInstance>> {
        ss.iter().map(|s| assemble_instance(s, Some(&demo), "Chemical", AssembleOptions::default())).collect()
    };
    let (tr, dv) = (build(train_set)?, build(dev_set)?);

    let cfg = ModelConfig { epochs, learning_rate, ..ModelConfig::default() };
    let out = train(&tr, &dv, &cfg, 1)?;
    for r in out.log.iter().filter(|r| r.epoch == 1 || r.epoch % 20 == 0) {
        println!("epoch {:>3}  loss {:.4}  dev F1 {:.3}", r.epoch, r.mean_loss, r.dev_f1);
    }
    println!("best epoch {}", out.best_epoch);

    let dir = tempfile::tempdir().map_err(|e| grape_ner::Error::io("tempdir", e))?;
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&path, &out.model)?;
    let reloaded = load_checkpoint(&path)?;
    let before = evaluate(&out.model, &dv)?.micro.f1();
    let after = evaluate(&reloaded, &dv)?.micro.f1();
    println!("dev F1 before save {before:.3}, after reload {after:.3}");
    assert_eq!(before, after);
    Ok(())
}
