//! Weighted-ensemble prediction over a trained ensemble.

use serde::{Deserialize, Serialize};

use crate::bagging::{self, argmax};
use crate::error::{Error, Result};
use crate::provider::Provider;
use crate::templates::TemplateSet;
use crate::types::{Ensemble, Example};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionMode {
    /// argmax over labels of sum_t lambda_t * I(learner t votes the label).
    WeightedVote,
    /// argmax of sum_t lambda_t * probs_t.
    WeightedScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerVote {
    pub prompt_id: String,
    /// Absent when the learner abstained (its evaluation failed).
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePrediction {
    /// Absent only when every learner abstained.
    pub label: Option<String>,
    pub per_learner: Vec<LearnerVote>,
}

/// Weighted decision over all learners. A learner whose evaluation errors
/// abstains and contributes zero; all-abstain yields an abstention result.
pub fn ensemble_predict(
    ensemble: &Ensemble,
    example: &Example,
    ts: &TemplateSet,
    provider: &dyn Provider,
    mode: DecisionMode,
    tau: f64,
) -> Result<EnsemblePrediction> {
    if ensemble.learners.is_empty() {
        return Err(Error::EnsembleEmpty);
    }
    let labels = &ensemble.label_space;
    let mut scores = vec![0.0_f64; labels.k()];
    let mut any_vote = false;
    let mut per_learner = Vec::with_capacity(ensemble.learners.len());

    for learner in &ensemble.learners {
        match bagging::bilateral_predict(ts, &learner.prompt, example, labels, provider, tau) {
            Ok(p) => {
                match mode {
                    DecisionMode::WeightedVote => scores[p.label_index] += learner.lambda,
                    DecisionMode::WeightedScore => {
                        for (s, prob) in scores.iter_mut().zip(&p.probs) {
                            *s += learner.lambda * prob;
                        }
                    }
                }
                any_vote = true;
                per_learner.push(LearnerVote {
                    prompt_id: learner.prompt.id.clone(),
                    label: Some(labels.label(p.label_index).to_string()),
                    probs: Some(p.probs),
                });
            }
            Err(_) => per_learner.push(LearnerVote {
                prompt_id: learner.prompt.id.clone(),
                label: None,
                probs: None,
            }),
        }
    }

    let label = if any_vote {
        Some(labels.label(argmax(&scores)).to_string())
    } else {
        None
    };
    Ok(EnsemblePrediction { label, per_learner })
}
