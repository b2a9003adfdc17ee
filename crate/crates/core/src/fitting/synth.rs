//! Synthetic behavioural data drawn from the model itself, for recovery
//! checks and for exercising the pipeline without human data.

use super::{ClassificationRecord, FitError, GenerationRecord};
use crate::grammar::Lesions;
use crate::inference::{FitParams, HypothesisSpace, TrialView};
use crate::trials::ResolvedTrial;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

/// `subjects` yes/no responses per test item, drawn from the classification
/// rule under `params`.
pub fn synthesize_classification<R: Rng + ?Sized>(
    space: &HypothesisSpace,
    trials: &[ResolvedTrial],
    params: &FitParams,
    lesions: Lesions,
    subjects: u32,
    rng: &mut R,
) -> Result<Vec<ClassificationRecord>, FitError> {
    let mut out = vec![];
    for rt in trials {
        let view = TrialView::new(space, rt, &[]);
        let post = view.posterior::<f64>(params, lesions)?;
        for (q, item) in rt.trial.test_items.iter().enumerate() {
            let p = post.classify_query(&view, q, params.alpha, params.beta).clamp(0.0, 1.0);
            let k = Binomial::new(subjects as u64, p).expect("p in [0, 1]").sample(rng) as u32;
            out.push(ClassificationRecord { trial_id: rt.id().to_string(), item: item.string.clone(), k, n: subjects });
        }
    }
    Ok(out)
}

/// `per_subject` tokens for each of `subjects` virtual participants per
/// trial, drawn from the posterior predictive.
pub fn synthesize_generation<R: Rng + ?Sized>(
    space: &HypothesisSpace,
    trials: &[ResolvedTrial],
    params: &FitParams,
    lesions: Lesions,
    subjects: u32,
    per_subject: u32,
    rng: &mut R,
) -> Result<Vec<GenerationRecord>, FitError> {
    let mut out = vec![];
    for rt in trials {
        let view = TrialView::new(space, rt, &[]);
        let post = view.posterior::<f64>(params, lesions)?;
        for s in 0..subjects {
            for _ in 0..per_subject {
                let y = post.sample_predictive(&view, params.alpha, rng);
                out.push(GenerationRecord {
                    trial_id: rt.id().to_string(),
                    token: rt.universe.string(y).to_string(),
                    participant_id: format!("s{s}"),
                });
            }
        }
    }
    Ok(out)
}
