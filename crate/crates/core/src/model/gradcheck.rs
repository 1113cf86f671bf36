//! Central finite-difference check of the analytic gradient.

use super::Model;
use crate::error::Result;
use crate::spanconv::MrcInstance;

/// Denominator floor: gradients smaller than this are compared absolutely.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Largest `|a − n| / max(|a|, |n|, floor)` over every checked value.
    pub max_rel_error: f64,
    /// Tensor name and flat index where that maximum occurred.
    pub worst: (String, usize),
    pub checked: usize,
}

/// Compares the analytic gradient of `instance`'s loss with central
/// differences of step `h`, for every parameter value (dropout off).
pub fn gradient_check(model: &Model, instance: &MrcInstance, h: f64) -> Result<GradCheck> {
    let (_, grads) = model.loss_and_gradients(instance, None)?;
    let names = model.params.names();
    let analytic: Vec<Vec<f64>> = grads.slices().into_iter().map(<[f64]>::to_vec).collect();
    let mut probe = model.clone();
    let mut report = GradCheck { max_rel_error: 0.0, worst: (String::new(), 0), checked: 0 };

    for (t, name) in names.iter().enumerate() {
        for (k, &a) in analytic[t].iter().enumerate() {
            let orig = probe.params.slices()[t][k];
            probe.params.slices_mut()[t][k] = orig + h;
            let plus = probe.loss(instance)?;
            probe.params.slices_mut()[t][k] = orig - h;
            let minus = probe.loss(instance)?;
            probe.params.slices_mut()[t][k] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRADCHECK_FLOOR);
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (name.clone(), k);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{IobTag, LabeledSentence};
    use crate::demos::{DemoKind, Demonstration};
    use crate::model::{ModelConfig, Vocab};
    use crate::spanconv::{assemble_instance, AssembleOptions};

    #[test]
    fn tiny_model_gradients_match() {
        let ctx = LabeledSentence::new(
            "t-0",
            vec!["zinc".into(), "binds".into()],
            vec![IobTag::begin("C"), IobTag::outside()],
        );
        let demo_sentence = LabeledSentence::new("t-1", vec!["iron".into()], vec![IobTag::begin("C")]);
        let demo =
            Demonstration { kind: DemoKind::Grape, sentence: Some(demo_sentence), score: 1.0, entity_type: "C".into() };
        let inst = assemble_instance(&ctx, Some(&demo), "C", AssembleOptions::default()).unwrap();
        assert_eq!(inst.len(), 6);
        let model = Model::new(ModelConfig::tiny(), Vocab::from_instances(std::slice::from_ref(&inst)), 2).unwrap();
        let report = gradient_check(&model, &inst, 1e-4).unwrap();
        assert_eq!(report.checked, model.params.num_values());
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}
