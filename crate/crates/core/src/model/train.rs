//! Epoch loop shared by full-model training and heads-only training over
//! imported representations.

use std::io::{self, Write};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, Vocab};
use super::encoder::Dropout;
use super::optim::Adam;
use super::params::{Params, Tensors};
use super::Model;
use crate::decode::{predict, GoldLabels, ProbabilitySource};
use crate::error::{Error, Result};
use crate::eval::{score, Averaging, EvalReport, GoldStandard, Prf};
use crate::spanconv::MrcInstance;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub dev_precision: f64,
    pub dev_recall: f64,
    pub dev_f1: f64,
    pub wall_secs: f64,
}

pub fn write_log<W: Write>(mut w: W, log: &[EpochRecord]) -> io::Result<()> {
    for rec in log {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    /// Snapshot with the best dev F1 (the final one when there is no dev set).
    pub model: M,
    pub log: Vec<EpochRecord>,
    /// 1-based epoch the snapshot was taken after.
    pub best_epoch: usize,
}

/// Scores `source` on `instances`, using the instances' own labels as gold.
pub fn evaluate<S: ProbabilitySource + Sync + ?Sized>(source: &S, instances: &[MrcInstance]) -> Result<EvalReport> {
    let gold: Vec<_> = instances.iter().map(|i| predict(i, &GoldLabels)).collect::<Result<_>>()?;
    let preds: Vec<_> = instances.par_iter().map(|i| predict(i, source)).collect::<Result<_>>()?;
    score(&GoldStandard::from_predictions(&gold), &preds)
}

/// Something with trainable tensors and a per-instance loss gradient.
pub(crate) trait Learner: ProbabilitySource + Sync + Clone {
    type P: Tensors;
    fn tensors_mut(&mut self) -> &mut Self::P;
    fn tensors(&self) -> &Self::P;
    fn loss_and_gradients(&self, instance: &MrcInstance, dropout: Option<Dropout<'_>>) -> Result<(f64, Self::P)>;
}

impl Learner for Model {
    type P = Params;

    fn tensors_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    fn tensors(&self) -> &Params {
        &self.params
    }

    fn loss_and_gradients(&self, instance: &MrcInstance, dropout: Option<Dropout<'_>>) -> Result<(f64, Params)> {
        Model::loss_and_gradients(self, instance, dropout)
    }
}

fn accumulate<P: Tensors>(acc: &mut P, g: &P, scale: f64) {
    for (dst, src) in acc.slices_mut().into_iter().zip(g.slices()) {
        for (d, s) in dst.iter_mut().zip(src) {
            *d += scale * s;
        }
    }
}

fn finite<P: Tensors>(p: &P) -> bool {
    p.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
}

pub(crate) fn run_epochs<L: Learner>(
    mut learner: L,
    train: &[MrcInstance],
    dev: &[MrcInstance],
    cfg: &ModelConfig,
    seed: u64,
) -> Result<TrainOutcome<L>> {
    if train.is_empty() {
        return Err(Error::ModelConfig("no training instances".into()));
    }
    // Independent streams for shuffling and dropout, both keyed by `seed`.
    let mut order_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut opt = Adam::new(learner.tensors(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, L)> = None;
    let mut step = 0;

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            step += 1;
            let mut grads = learner.tensors().zeros_like();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let dropout = (cfg.dropout > 0.0).then_some(Dropout { rate: cfg.dropout, rng: &mut dropout_rng });
                let (value, g) = learner.loss_and_gradients(&train[i], dropout)?;
                if !value.is_finite() || !finite(&g) {
                    return Err(Error::Diverged { epoch, step, loss: value });
                }
                total += value;
                accumulate(&mut grads, &g, scale);
            }
            opt.step(learner.tensors_mut(), &grads);
            if !finite(learner.tensors()) {
                return Err(Error::Diverged { epoch, step, loss: f64::NAN });
            }
        }

        let dev_prf = if dev.is_empty() { Prf::default() } else { evaluate(&learner, dev)?.prf(Averaging::Micro) };
        log.push(EpochRecord {
            epoch,
            mean_loss: total / train.len() as f64,
            dev_precision: dev_prf.precision,
            dev_recall: dev_prf.recall,
            dev_f1: dev_prf.f1,
            wall_secs: started.elapsed().as_secs_f64(),
        });

        let improved = best.as_ref().is_none_or(|(f, _, _)| dev.is_empty() || dev_prf.f1 > *f);
        if improved {
            best = Some((dev_prf.f1, epoch, learner.clone()));
        } else if let (Some(patience), Some((_, at, _))) = (cfg.patience, best.as_ref()) {
            if epoch - at >= patience {
                break;
            }
        }
    }

    let (model, best_epoch) = match best {
        Some((_, e, m)) => (m, e),
        None => (learner, 0),
    };
    Ok(TrainOutcome { model, log, best_epoch })
}

/// Trains a fresh model: vocabulary from the training instances, parameters
/// initialised from `seed`, best-dev-F1 snapshot returned.
pub fn train(train: &[MrcInstance], dev: &[MrcInstance], cfg: &ModelConfig, seed: u64) -> Result<TrainOutcome<Model>> {
    let longest = train.iter().chain(dev).map(MrcInstance::len).max().unwrap_or(0);
    if longest > cfg.max_seq_len {
        return Err(Error::ModelConfig(format!(
            "max_seq_len {} is shorter than an instance of length {longest}",
            cfg.max_seq_len
        )));
    }
    let model = Model::new(cfg.clone(), Vocab::from_instances(train), seed)?;
    run_epochs(model, train, dev, cfg, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{IobTag, LabeledSentence};
    use crate::spanconv::{assemble_instance, AssembleOptions};

    fn instance(id: &str, words: &[&str], entity: &[usize]) -> MrcInstance {
        let tags = (0..words.len())
            .map(|i| if entity.contains(&i) { IobTag::begin("C") } else { IobTag::outside() })
            .collect();
        let s = LabeledSentence::new(id, words.iter().map(|w| w.to_string()).collect(), tags);
        assemble_instance(&s, None, "C", AssembleOptions::default()).unwrap()
    }

    fn small() -> ModelConfig {
        ModelConfig {
            d_model: 16,
            n_heads: 2,
            d_ff: 32,
            n_layers: 1,
            max_seq_len: 32,
            learning_rate: 1e-2,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn memorizes_one_instance() {
        let inst = instance("t-0", &["the", "zinc", "ion", "binds"], &[1]);
        let cfg = ModelConfig { epochs: 150, dropout: 0.0, ..small() };
        let model = Model::new(cfg.clone(), Vocab::from_instances(std::slice::from_ref(&inst)), 3).unwrap();
        let before = model.loss(&inst).unwrap();
        let out = run_epochs(model, std::slice::from_ref(&inst), &[], &cfg, 3).unwrap();
        let after = out.model.loss(&inst).unwrap();
        assert!(after < before);
        assert!(after < 0.01, "loss {after}");
        assert_eq!(out.log.len(), 150);
        assert_eq!(out.best_epoch, 150);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let data = [instance("t-0", &["a", "zinc"], &[1]), instance("t-1", &["iron", "b", "c"], &[0])];
        let cfg = ModelConfig { epochs: 3, batch_size: 2, ..small() };
        let a = train(&data, &data, &cfg, 11).unwrap();
        let b = train(&data, &data, &cfg, 11).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.best_epoch, b.best_epoch);
        let c = train(&data, &data, &cfg, 12).unwrap();
        assert_ne!(a.model, c.model);
    }

    #[test]
    fn patience_stops_early() {
        let data = [instance("t-0", &["a", "zinc"], &[1])];
        let cfg = ModelConfig { epochs: 50, patience: Some(2), ..small() };
        let out = train(&data, &data, &cfg, 0).unwrap();
        assert!(out.log.len() <= out.best_epoch + 2);
    }

    #[test]
    fn divergence_is_reported() {
        let data = [instance("t-0", &["a", "zinc"], &[1])];
        let cfg = ModelConfig { epochs: 2, learning_rate: f64::MAX, ..small() };
        // validate() accepts any finite positive rate; the update overflows.
        assert!(matches!(train(&data, &[], &cfg, 0), Err(Error::Diverged { .. })));
    }

    #[test]
    fn log_lines_are_json() {
        let rec = EpochRecord {
            epoch: 1,
            mean_loss: 0.5,
            dev_precision: 1.0,
            dev_recall: 0.5,
            dev_f1: 2.0 / 3.0,
            wall_secs: 0.1,
        };
        let mut buf = Vec::new();
        write_log(&mut buf, &[rec.clone(), rec]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back: EpochRecord = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(back.epoch, 1);
    }
}
