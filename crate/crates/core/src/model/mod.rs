//! Span-prediction model: a small transformer encoder producing `H`, and the
//! dual start/end heads on top of it.

mod checkpoint;
mod config;
mod encoder;
mod gradcheck;
mod heads;
mod imported;
mod optim;
mod params;
mod repfile;
mod train;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use config::{ModelConfig, Vocab, PAD, UNK};
pub use encoder::Dropout;
pub use gradcheck::{gradient_check, GradCheck, GRADCHECK_FLOOR};
pub use heads::{
    end_logits, heads_backward, heads_forward, loss, row_softmax, start_logits, supervised_positions, HeadForward,
    ProbMatrices,
};
pub use imported::{train_heads, HeadsOverRepresentations};
pub use optim::Adam;
pub use params::{EncoderParams, LayerParams, Params, SpanHeads, Tensors};
pub use repfile::{
    export_representations, import_representations, read_representations, write_representations, RepresentationSet,
    REPRESENTATION_MAGIC,
};
pub use train::{evaluate, train, write_log, EpochRecord, TrainOutcome};

use crate::decode::ProbabilitySource;
use crate::error::{Error, Result};
use crate::spanconv::MrcInstance;

/// Contextual representations: one row of width `d_model` per position.
#[derive(Debug, Clone, PartialEq)]
pub struct Representations {
    pub h: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: Params,
}

impl Model {
    pub fn new(config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = Params::init(&config, vocab.len(), &mut rng);
        Ok(Model { config, vocab, params })
    }

    fn ids(&self, instance: &MrcInstance) -> Result<Vec<usize>> {
        if instance.len() > self.config.max_seq_len {
            return Err(Error::InstanceTooLong {
                id: instance.id(),
                len: instance.len(),
                max: self.config.max_seq_len,
            });
        }
        Ok(self.vocab.ids(&instance.tokens))
    }

    /// Evaluation-mode encoding (no dropout).
    pub fn encode(&self, instance: &MrcInstance) -> Result<Representations> {
        let ids = self.ids(instance)?;
        let (h, _) = encoder::forward(&self.params.encoder, &ids, self.config.n_heads, None);
        Ok(Representations { h })
    }

    pub fn forward(&self, instance: &MrcInstance) -> Result<HeadForward> {
        let reps = self.encode(instance)?;
        Ok(heads_forward(&reps.h, &self.params.heads))
    }

    pub fn loss(&self, instance: &MrcInstance) -> Result<f64> {
        let fwd = self.forward(instance)?;
        loss(&fwd.start_logits, &fwd.end_logits, instance, self.config.supervise_demo)
    }

    /// Loss and full parameter gradient for one instance.
    pub fn loss_and_gradients(&self, instance: &MrcInstance, dropout: Option<Dropout<'_>>) -> Result<(f64, Params)> {
        let ids = self.ids(instance)?;
        let (h, cache) = encoder::forward(&self.params.encoder, &ids, self.config.n_heads, dropout);
        let fwd = heads_forward(&h, &self.params.heads);
        let mut grads = self.params.zeros_like();
        let (value, d_h) =
            heads_backward(&h, &self.params.heads, &fwd, instance, self.config.supervise_demo, &mut grads.heads)?;
        encoder::backward(&self.params.encoder, &cache, &d_h, &mut grads.encoder);
        Ok((value, grads))
    }
}

impl ProbabilitySource for Model {
    fn prob_matrices(&self, instance: &MrcInstance) -> Result<ProbMatrices> {
        Ok(self.forward(instance)?.probabilities())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{IobTag, LabeledSentence};
    use crate::spanconv::{assemble_instance, AssembleOptions};

    fn instance(words: &[&str], entity: usize) -> MrcInstance {
        let tags = (0..words.len()).map(|i| if i == entity { IobTag::begin("C") } else { IobTag::outside() }).collect();
        let s = LabeledSentence::new("t-0", words.iter().map(|w| w.to_string()).collect(), tags);
        assemble_instance(&s, None, "C", AssembleOptions::default()).unwrap()
    }

    fn model_for(inst: &MrcInstance, cfg: ModelConfig) -> Model {
        Model::new(cfg, Vocab::from_instances(std::slice::from_ref(inst)), 7).unwrap()
    }

    #[test]
    fn encode_is_deterministic_and_shaped() {
        let inst = instance(&["zinc"], 0);
        let m = model_for(&inst, ModelConfig::default());
        let a = m.encode(&inst).unwrap();
        assert_eq!(a.h.dim(), (3, 64));
        assert_eq!(a, m.encode(&inst).unwrap());
        assert!(a.h.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn positions_matter() {
        let a = instance(&["zinc", "binds", "iron"], 0);
        let b = instance(&["binds", "zinc", "iron"], 0);
        let m = model_for(&a, ModelConfig::default());
        let ha = m.encode(&a).unwrap().h;
        let hb = m.encode(&b).unwrap().h;
        assert_ne!(ha.row(1), hb.row(2));
        assert_ne!(ha.row(2), hb.row(1));
    }

    #[test]
    fn over_length_is_rejected() {
        let inst = instance(&["a", "b", "c"], 0);
        let m = model_for(&inst, ModelConfig { max_seq_len: 4, ..ModelConfig::default() });
        assert!(matches!(m.encode(&inst), Err(Error::InstanceTooLong { .. })));
    }

    #[test]
    fn zero_heads_cost_ln2() {
        let inst = instance(&["x", "zinc", "y"], 1);
        let mut m = model_for(&inst, ModelConfig::default());
        m.params.heads = SpanHeads::zeros(64);
        assert!((m.loss(&inst).unwrap() - std::f64::consts::LN_2).abs() < 1e-9);
    }

    #[test]
    fn unknown_tokens_map_to_unk() {
        let inst = instance(&["zinc"], 0);
        let m = model_for(&inst, ModelConfig::default());
        let other = instance(&["never-seen"], 0);
        assert!(m.encode(&other).is_ok());
        assert_eq!(m.vocab.id("never-seen"), Vocab::UNK_ID);
    }
}
