//! Span heads driven by imported representations instead of the built-in
//! encoder.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::encoder::Dropout;
use super::heads::{heads_backward, heads_forward, ProbMatrices};
use super::params::SpanHeads;
use super::repfile::RepresentationSet;
use super::train::{run_epochs, Learner, TrainOutcome};
use crate::decode::ProbabilitySource;
use crate::error::{Error, Result};
use crate::spanconv::MrcInstance;

#[derive(Debug, Clone, PartialEq)]
pub struct HeadsOverRepresentations {
    pub heads: SpanHeads,
    pub representations: Arc<RepresentationSet>,
    pub supervise_demo: bool,
}

impl ProbabilitySource for HeadsOverRepresentations {
    fn prob_matrices(&self, instance: &MrcInstance) -> Result<ProbMatrices> {
        let h = self.representations.h_for(instance)?;
        Ok(heads_forward(&h, &self.heads).probabilities())
    }
}

impl Learner for HeadsOverRepresentations {
    type P = SpanHeads;

    fn tensors_mut(&mut self) -> &mut SpanHeads {
        &mut self.heads
    }

    fn tensors(&self) -> &SpanHeads {
        &self.heads
    }

    // Representations are fixed, so dropout has nothing to act on.
    fn loss_and_gradients(&self, instance: &MrcInstance, _dropout: Option<Dropout<'_>>) -> Result<(f64, SpanHeads)> {
        let h = self.representations.h_for(instance)?;
        let fwd = heads_forward(&h, &self.heads);
        let mut grads = self.heads.zeroed();
        let (value, _) = heads_backward(&h, &self.heads, &fwd, instance, self.supervise_demo, &mut grads)?;
        Ok((value, grads))
    }
}

/// Trains only the span heads over imported `H` matrices. Uses the
/// optimizer settings, epochs, batch size and patience from `cfg`; the
/// encoder dimensions in `cfg` are ignored.
pub fn train_heads(
    representations: Arc<RepresentationSet>,
    train: &[MrcInstance],
    dev: &[MrcInstance],
    cfg: &ModelConfig,
    seed: u64,
) -> Result<TrainOutcome<HeadsOverRepresentations>> {
    representations.check_against(train)?;
    representations.check_against(dev)?;
    let d = representations.width().ok_or_else(|| Error::Representation("empty representation set".into()))?;
    let heads = SpanHeads::init(d, &mut ChaCha8Rng::seed_from_u64(seed));
    let learner = HeadsOverRepresentations { heads, representations, supervise_demo: cfg.supervise_demo };
    let cfg = ModelConfig { dropout: 0.0, ..cfg.clone() };
    run_epochs(learner, train, dev, &cfg, seed)
}
